#pragma once

#include "daa/nn/alloc.hpp"
#include "daa/nn/autograd.hpp"
#include "daa/nn/errors.hpp"
#include "daa/nn/loss.hpp"
#include "daa/nn/ops.hpp"
#include "daa/nn/optim.hpp"
#include "daa/nn/parallel.hpp"
#include "daa/nn/random.hpp"
#include "daa/nn/stats.hpp"
#include "daa/nn/tensor.hpp"
#include "daa/nn/weights_io.hpp"
