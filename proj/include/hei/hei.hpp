#pragma once

#include "hei/autodiff.hpp"
#include "hei/backbones.hpp"
#include "hei/experiment.hpp"
#include "hei/graph.hpp"
#include "hei/io.hpp"
#include "hei/nn.hpp"
#include "hei/optim.hpp"
#include "hei/random.hpp"
#include "hei/similarity.hpp"
#include "hei/stats.hpp"
#include "hei/synthgen.hpp"
#include "hei/tensor.hpp"
#include "hei/trainers.hpp"
#include "hei/version.hpp"
