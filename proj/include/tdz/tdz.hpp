// SPDX-License-Identifier: Apache-2.0
// Umbrella header for the library. The command-line front end lives in
// tdz/cli.hpp and is not pulled in here.
#pragma once

#include "tdz/error.hpp"
#include "tdz/tensor.hpp"
#include "tdz/tensor_ops.hpp"
#include "tdz/svd.hpp"
#include "tdz/rank_planner.hpp"
#include "tdz/factors.hpp"
#include "tdz/decompose.hpp"
#include "tdz/factored_layers.hpp"
#include "tdz/container.hpp"
#include "tdz/compress.hpp"
