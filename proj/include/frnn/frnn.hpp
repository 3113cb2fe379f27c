#pragma once

#include "frnn/cells.hpp"
#include "frnn/config.hpp"
#include "frnn/data.hpp"
#include "frnn/folded.hpp"
#include "frnn/metrics.hpp"
#include "frnn/nn_ops.hpp"
#include "frnn/pgm.hpp"
#include "frnn/sequence.hpp"
#include "frnn/tensor.hpp"
#include "frnn/topology_text.hpp"
#include "frnn/training.hpp"
