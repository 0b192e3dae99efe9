#ifndef LATENTODE_LATENTODE_HPP
#define LATENTODE_LATENTODE_HPP

#include "latentode/baseline.hpp"
#include "latentode/checkpoint.hpp"
#include "latentode/dataset.hpp"
#include "latentode/evaluate.hpp"
#include "latentode/latent_ode.hpp"
#include "latentode/nn.hpp"
#include "latentode/ode.hpp"
#include "latentode/optim.hpp"
#include "latentode/rng.hpp"
#include "latentode/tensor.hpp"
#include "latentode/train.hpp"

#endif  // LATENTODE_LATENTODE_HPP
