// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "reentry/reentry.hpp"
#include "test_util.hpp"

using namespace reentry;
using reentry::testing::slurp;
using reentry::testing::spit;
using reentry::testing::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result cli(const TempDir& dir, const std::string& args) {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = "cd '" + dir.path().string() + "' && '" REENTRY_CLI_PATH "' " + args + " > '" + out + "' 2> '" + err + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::map<std::string, std::string>> read_csv_file(const std::string& path) {
  std::ifstream in(path);
  return csv::read(in);
}

void drop_lines_containing(const std::string& src, const std::string& dst, const std::string& needle) {
  std::istringstream in(slurp(src));
  std::string line, kept;
  while (std::getline(in, line))
    if (line.find(needle) == std::string::npos) kept += line + "\n";
  spit(dst, kept);
}

// synth -> prune -> prepare for a small dataset in `dir`.
void build_tensor(const TempDir& dir, int objects, const std::string& outlier_rate = "0") {
  ASSERT_EQ(cli(dir, "synth --out-dir d --objects " + std::to_string(objects) + " --outlier-rate " + outlier_rate + " --seed 3").code, 0);
  ASSERT_EQ(cli(dir, "prune --omm d/omm.csv --tip d/tip.csv --out pruned.csv --no-select").code, 0);
  ASSERT_EQ(cli(dir, "prepare --tracks pruned.csv --tip d/tip.csv --space-weather d/space_weather.csv "
                     "--area-to-mass d/area_to_mass.csv --out tensor.json --seed 3")
                .code,
            0);
}

const char* kTinyModel = "--hidden-size 4 --num-layers 1 --batch-size 2";

}  // namespace

TEST(Cli, CleanFileHasNoRemovals) {
  TempDir dir("cli_clean");
  SyntheticSpec s;
  s.n_objects = 3;
  s.seed = 1;
  s.mm_noise_rel = s.ecc_noise = s.incl_noise_deg = s.bstar_noise_rel = 0.0;
  const auto ds = generate_tracks(s);
  {
    std::ofstream omm(dir.file("omm.csv")), tip(dir.file("tip.csv"));
    write_omm_csv(omm, ds.all_records());
    write_tip_csv(tip, ds);
  }
  const auto r = cli(dir, "prune --omm omm.csv --tip tip.csv --out pruned.csv --no-select");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("removed_records: 0"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir.file("pruned.csv")), slurp(dir.file("omm.csv")));
}

TEST(Cli, InjectedOutliersRemoved) {
  TempDir dir("cli_injected");
  ASSERT_EQ(cli(dir, "synth --out-dir d --objects 6 --outlier-rate 0.05 --seed 3").code, 0);
  const auto r = cli(dir, "prune --omm d/omm.csv --tip d/tip.csv --out pruned.csv --no-select");
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, int> labelled;
  for (const auto& row : read_csv_file(dir.file("d/outliers.csv"))) ++labelled[row.at("norad_id")];
  int total_removed = 0, total_input = 0, total_labels = 0;
  for (const auto& row : read_csv_file(dir.file("pruned.csv.report.csv"))) {
    const int removed = std::stoi(row.at("removed_corrections")) + std::stoi(row.at("removed_mean_motion")) +
                        std::stoi(row.at("removed_ecc_incl")) + std::stoi(row.at("removed_negative_bstar"));
    EXPECT_GE(removed, labelled[row.at("norad_id")]) << row.at("norad_id");
    total_removed += removed;
    total_labels += labelled[row.at("norad_id")];
    total_input += std::stoi(row.at("input_records"));
  }
  EXPECT_GT(total_labels, 0);
  // Every label removed; extra removals within the false-positive budget.
  EXPECT_LE(total_removed - total_labels, static_cast<int>(0.01 * total_input) + 1);
}

TEST(Cli, MissingTipIsSkippedWithWarning) {
  TempDir dir("cli_tip");
  ASSERT_EQ(cli(dir, "synth --out-dir d --objects 3 --seed 2").code, 0);
  drop_lines_containing(dir.file("d/tip.csv"), dir.file("tip.csv"), "90002");
  const auto r = cli(dir, "prune --omm d/omm.csv --tip tip.csv --out pruned.csv --no-select");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning: object 90002"), std::string::npos) << r.err;
  bool found = false;
  for (const auto& row : read_csv_file(dir.file("pruned.csv.report.csv")))
    if (row.at("norad_id") == "90002") {
      found = true;
      EXPECT_EQ(row.at("status"), "skipped:no_tip");
    }
  EXPECT_TRUE(found);
}

TEST(Cli, PrepareShapeDeterminismAndImputation) {
  TempDir dir("cli_prepare");
  build_tensor(dir, 5);
  const auto first = slurp(dir.file("tensor.json"));
  const auto r = cli(dir, "prepare --tracks pruned.csv --tip d/tip.csv --space-weather d/space_weather.csv "
                          "--area-to-mass d/area_to_mass.csv --out tensor.json --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("shape: [5 x 25 x 4]"), std::string::npos) << r.out;
  EXPECT_EQ(file_digest(dir.file("tensor.json")), "fnv1a64:" + hex64(fnv1a64(first)));
  const auto manifest = nlohmann::json::parse(slurp(dir.file("tensor.json.manifest.json")));
  EXPECT_EQ(manifest["outputs"][0]["digest"], file_digest(dir.file("tensor.json")));

  drop_lines_containing(dir.file("d/area_to_mass.csv"), dir.file("am.csv"), "90004");
  const auto imp = cli(dir, "prepare --tracks pruned.csv --tip d/tip.csv --space-weather d/space_weather.csv "
                            "--area-to-mass am.csv --out imputed.json --seed 3");
  ASSERT_EQ(imp.code, 0) << imp.err;
  EXPECT_NE(imp.err.find("object 90004: area-to-mass imputed with training median"), std::string::npos) << imp.err;
  EXPECT_NE(imp.out.find("imputed_area_to_mass: 1"), std::string::npos);
}

TEST(Cli, ZeroCheckpointPredictsConstant) {
  TempDir dir("cli_predict");
  build_tensor(dir, 5);
  const auto ft = tensor_from_json(nlohmann::json::parse(slurp(dir.file("tensor.json"))));
  Checkpoint c;
  c.model = nn::Seq2SeqModel::zeros(nn::ModelShape{4, 1, 6, 2});
  c.tx = 5;
  c.norm_stats = ft.norm_stats;
  save_checkpoint(c, dir.file("zero.ckpt.json"));
  const auto r = cli(dir, "predict --checkpoint zero.ckpt.json --tensor tensor.json --norad 90001 --out steps.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("reentry_epoch: "), std::string::npos);
  const auto rows = read_csv_file(dir.file("steps.csv"));
  ASSERT_EQ(rows.size(), 20u);
  for (const auto& row : rows) EXPECT_EQ(row.at("predicted_time_days"), rows[0].at("predicted_time_days"));
  EXPECT_EQ(std::stod(rows[0].at("predicted_time_days")), ft.time_stats().invert(0.0));
}

TEST(Cli, TrainAndEvalAreDeterministic) {
  TempDir dir("cli_train");
  build_tensor(dir, 5);
  const std::string train = std::string("train --tensor tensor.json --epochs 3 --seed 4 ") + kTinyModel;
  ASSERT_EQ(cli(dir, train + " --out a.ckpt.json").code, 0);
  ASSERT_EQ(cli(dir, train + " --out b.ckpt.json").code, 0);
  EXPECT_EQ(slurp(dir.file("a.ckpt.json")), slurp(dir.file("b.ckpt.json")));
  const std::string eval = "eval --tensor tensor.json --checkpoint a.ckpt.json --tracks pruned.csv --tip d/tip.csv --out-dir ";
  ASSERT_EQ(cli(dir, eval + "e1").code, 0);
  const auto r = cli(dir, eval + "e2");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"report_A.csv", "table_A.csv", "report_A.json", "plot_A.csv"})
    EXPECT_EQ(slurp(dir.file(std::string("e1/") + f)), slurp(dir.file(std::string("e2/") + f))) << f;
  EXPECT_NE(r.out.find("median_eps_rel_percent"), std::string::npos);
}

TEST(Cli, TuneLedgerMatchesHandSimulation) {
  TempDir dir("cli_tune");
  build_tensor(dir, 5);
  spit(dir.file("objective.csv"), "trial,rung,loss\n0,0,3\n1,0,1\n2,0,2\n1,1,0.5\n1,2,0.25\n");
  const auto r = cli(dir, "tune --tensor tensor.json --trials 3 --parallelism 1 --scripted-objective objective.csv "
                          "--ledger ledger.jsonl");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(dir.file("ledger.jsonl")));
  std::vector<std::tuple<int, int, int, std::string, double>> got;
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    got.emplace_back(j["trial"], j["rung"], j["epoch"], j["decision"], j["val_loss"]);
  }
  const std::vector<std::tuple<int, int, int, std::string, double>> expected{
      {0, 0, 400, "halt", 3.0}, {1, 0, 400, "promote", 1.0}, {2, 0, 400, "halt", 2.0},
      {1, 1, 1600, "promote", 0.5}, {1, 2, 2100, "complete", 0.25}};
  EXPECT_EQ(got, expected);
  const auto summary = nlohmann::json::parse(slurp(dir.file("ledger.jsonl.summary.json")));
  EXPECT_EQ(summary["trial"], 1);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_exit");
  EXPECT_EQ(cli(dir, "predict --checkpoint missing.json --tensor missing.json --norad 1").code, 2);
  EXPECT_EQ(cli(dir, "synth --out-dir d --objects 0").code, 4);
  EXPECT_EQ(cli(dir, "prune --no-such-flag").code, 4);
  EXPECT_EQ(cli(dir, "--help").code, 0);
  spit(dir.file("bad.json"), "{ not json");
  EXPECT_EQ(cli(dir, "predict --checkpoint bad.json --tensor bad.json --norad 1").code, 2);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  TempDir dir("cli_config");
  spit(dir.file("synth.conf"), "objects = 2\nseed = 9\n");
  auto r = cli(dir, "synth --config synth.conf --out-dir a");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("objects: 2"), std::string::npos);
  r = cli(dir, "synth --config synth.conf --objects 3 --out-dir b");
  EXPECT_NE(r.out.find("objects: 3"), std::string::npos);
  // The config's seed applies: same seed flag gives the same files.
  ASSERT_EQ(cli(dir, "synth --objects 2 --seed 9 --out-dir c").code, 0);
  EXPECT_EQ(slurp(dir.file("a/omm.csv")), slurp(dir.file("c/omm.csv")));
}
