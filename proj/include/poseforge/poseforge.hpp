#pragma once

#include "poseforge/correspondences.hpp"
#include "poseforge/epnp.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/harness.hpp"
#include "poseforge/p3p.hpp"
#include "poseforge/quartic.hpp"
#include "poseforge/random.hpp"
#include "poseforge/ransac.hpp"
#include "poseforge/registration.hpp"
#include "poseforge/regressor/adam.hpp"
#include "poseforge/regressor/checkpoint.hpp"
#include "poseforge/regressor/network.hpp"
#include "poseforge/regressor/train.hpp"
#include "poseforge/scene_io.hpp"
#include "poseforge/voting.hpp"
