#pragma once

#include "cone_sampler/dataset.hpp"
#include "cone_sampler/embedding_set.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/geometry.hpp"
#include "cone_sampler/io.hpp"
#include "cone_sampler/metrics.hpp"
#include "cone_sampler/random.hpp"
#include "cone_sampler/report.hpp"
#include "cone_sampler/version.hpp"
