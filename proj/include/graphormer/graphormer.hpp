// SPDX-License-Identifier: Apache-2.0
// Umbrella header: the full library, CLI command layer included.
#pragma once

#include "graphormer/cli/commands.hpp"
#include "graphormer/config.hpp"
#include "graphormer/encoder/stack.hpp"
#include "graphormer/graph/dataset.hpp"
#include "graphormer/numerics/grad_check.hpp"
#include "graphormer/pipeline/accounting.hpp"
#include "graphormer/pipeline/model.hpp"
#include "graphormer/training/trainer.hpp"
