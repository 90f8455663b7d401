#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "nn_core.hpp"
#include "channel.hpp"
#include "ae_model.hpp"
#include "training.hpp"
#include "baselines.hpp"
#include "eval.hpp"
#include "io.hpp"
