#pragma once

#include "duffin/autograd.hpp"
#include "duffin/csi.hpp"
#include "duffin/dataset.hpp"
#include "duffin/gradcheck.hpp"
#include "duffin/linksim.hpp"
#include "duffin/model.hpp"
#include "duffin/model_io.hpp"
#include "duffin/ops.hpp"
#include "duffin/optim.hpp"
#include "duffin/quantizer.hpp"
#include "duffin/rng.hpp"
#include "duffin/tensor.hpp"
#include "duffin/trainer.hpp"
#include "duffin/util.hpp"
#include "duffin/version.hpp"
