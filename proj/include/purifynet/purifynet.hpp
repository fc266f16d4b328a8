// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "purifynet/errors.hpp"
#include "purifynet/tensor.hpp"
#include "purifynet/rng.hpp"
#include "purifynet/embedding.hpp"
#include "purifynet/mlp.hpp"
#include "purifynet/loss.hpp"
#include "purifynet/optimizer.hpp"
#include "purifynet/checkpoint.hpp"
#include "purifynet/datasets.hpp"
#include "purifynet/classifier.hpp"
#include "purifynet/diffusion.hpp"
#include "purifynet/attacks.hpp"
#include "purifynet/harness.hpp"
#include "purifynet/config.hpp"
#include "purifynet/commands.hpp"
