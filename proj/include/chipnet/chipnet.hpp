#pragma once

// Umbrella header for the whole LiDAR drivable-region pipeline.

#include "chipnet/autodiff.hpp"
#include "chipnet/common.hpp"
#include "chipnet/config.hpp"
#include "chipnet/container.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/groundtruth.hpp"
#include "chipnet/hwsim.hpp"
#include "chipnet/metrics.hpp"
#include "chipnet/network.hpp"
#include "chipnet/pgm.hpp"
#include "chipnet/pointcloud.hpp"
#include "chipnet/postprocess.hpp"
#include "chipnet/spherical.hpp"
#include "chipnet/synthetic.hpp"
#include "chipnet/tensor.hpp"
#include "chipnet/train.hpp"
