#pragma once

// Umbrella header for the RLHF simulation laboratory.

#include "rlhflab/backbone.hpp"
#include "rlhflab/checkpoint.hpp"
#include "rlhflab/config.hpp"
#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/evaluation.hpp"
#include "rlhflab/mlp.hpp"
#include "rlhflab/optimizer.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"
#include "rlhflab/rng.hpp"
#include "rlhflab/run_log.hpp"
#include "rlhflab/run_record.hpp"
#include "rlhflab/schedulers.hpp"
#include "rlhflab/updates.hpp"
