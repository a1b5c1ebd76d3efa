// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "reentry/adam.hpp"
#include "reentry/checkpoint.hpp"
#include "reentry/csv.hpp"
#include "reentry/decay_fit.hpp"
#include "reentry/error.hpp"
#include "reentry/evaluation.hpp"
#include "reentry/features.hpp"
#include "reentry/gru.hpp"
#include "reentry/hypersearch.hpp"
#include "reentry/orbit.hpp"
#include "reentry/random.hpp"
#include "reentry/run_config.hpp"
#include "reentry/seq2seq.hpp"
#include "reentry/synthetic.hpp"
#include "reentry/time.hpp"
#include "reentry/tle_data.hpp"
#include "reentry/training.hpp"
