#pragma once

#include "spxr/commands.hpp"
#include "spxr/config.hpp"
#include "spxr/error.hpp"
#include "spxr/fh.hpp"
#include "spxr/groundtruth.hpp"
#include "spxr/io.hpp"
#include "spxr/metrics.hpp"
#include "spxr/mlp.hpp"
#include "spxr/parallel.hpp"
#include "spxr/pool.hpp"
#include "spxr/postprocess.hpp"
#include "spxr/raster.hpp"
#include "spxr/refine.hpp"
#include "spxr/synth.hpp"
