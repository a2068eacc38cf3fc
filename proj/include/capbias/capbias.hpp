#pragma once

#include "capbias/binning.hpp"
#include "capbias/error.hpp"
#include "capbias/eval.hpp"
#include "capbias/exif_meta.hpp"
#include "capbias/ingest.hpp"
#include "capbias/photometry.hpp"
#include "capbias/remote.hpp"
#include "capbias/report.hpp"
#include "capbias/svg_heatmap.hpp"
#include "capbias/version.hpp"
