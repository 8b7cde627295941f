#pragma once

#include "specgeo/error.hpp"
#include "specgeo/matrix.hpp"
#include "specgeo/random.hpp"
#include "specgeo/tensor.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/manifest.hpp"
#include "specgeo/script.hpp"
#include "specgeo/covariance.hpp"
#include "specgeo/format.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/optimize.hpp"
#include "specgeo/concepts.hpp"
#include "specgeo/stats.hpp"
#include "specgeo/transport.hpp"
#include "specgeo/probing.hpp"
#include "specgeo/steering.hpp"
#include "specgeo/synthetic.hpp"
#include "specgeo/report.hpp"
#include "specgeo/cli.hpp"
