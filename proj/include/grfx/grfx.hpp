#pragma once

#include "grfx/error.hpp"
#include "grfx/jet_layout.hpp"
#include "grfx/covariance.hpp"
#include "grfx/mean.hpp"
#include "grfx/model.hpp"
#include "grfx/spectral.hpp"
#include "grfx/conditions.hpp"
#include "grfx/lattice.hpp"
#include "grfx/log_space.hpp"
#include "grfx/random.hpp"
#include "grfx/joint_law.hpp"
#include "grfx/measure.hpp"
#include "grfx/change_of_measure.hpp"
#include "grfx/parallel.hpp"
#include "grfx/estimator.hpp"
