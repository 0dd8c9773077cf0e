#pragma once

#include "mirrorcast/analysis.hpp"
#include "mirrorcast/config.hpp"
#include "mirrorcast/core.hpp"
#include "mirrorcast/frame_update.hpp"
#include "mirrorcast/frustum.hpp"
#include "mirrorcast/mirror_geometry.hpp"
#include "mirrorcast/pose_store.hpp"
#include "mirrorcast/pose_wire.hpp"
#include "mirrorcast/session.hpp"
#include "mirrorcast/silhouette.hpp"
#include "mirrorcast/smoothing.hpp"
#include "mirrorcast/trace.hpp"
