#pragma once

// Umbrella header: multidimensional uncertainty toolkit (subjective-logic
// opinions, evidential losses, graph kernel priors, bi-level reweighting,
// sequential fusion detectors) plus the synthetic-data experiment harness.

#include "batchnorm.hpp"
#include "bilevel.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "datagen.hpp"
#include "dual.hpp"
#include "earlydet.hpp"
#include "experiments.hpp"
#include "gkde.hpp"
#include "graph.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "net.hpp"
#include "opinion.hpp"
#include "ranking.hpp"
#include "rng.hpp"
#include "robust_ssl.hpp"
#include "serialize.hpp"
#include "special.hpp"
#include "ssl.hpp"
#include "trainers.hpp"
#include "uncertainty.hpp"
#include "verify.hpp"
