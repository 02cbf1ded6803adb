#ifndef NSGP_NSGP_HPP
#define NSGP_NSGP_HPP

#include "nsgp/core.hpp"
#include "nsgp/distributions.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/sampler.hpp"
#include "nsgp/emulator.hpp"
#include "nsgp/stationary_gp.hpp"
#include "nsgp/mixture.hpp"
#include "nsgp/nonstationary_gp.hpp"
#include "nsgp/design.hpp"
#include "nsgp/validation.hpp"
#include "nsgp/testfns.hpp"
#include "nsgp/io.hpp"
#include "nsgp/config.hpp"
#include "nsgp/artifact.hpp"
#include "nsgp/pipeline.hpp"

#endif  // NSGP_NSGP_HPP
