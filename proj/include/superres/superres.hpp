#pragma once

// Umbrella header: moment-based sensitivity and optimal linear observables
// for two-point-source separation estimation.

#include "superres/asymptotics.hpp"
#include "superres/demux_model.hpp"
#include "superres/direct_imaging.hpp"
#include "superres/errors.hpp"
#include "superres/hg_overlap.hpp"
#include "superres/ideal_closed_form.hpp"
#include "superres/mc_oracle.hpp"
#include "superres/moments_engine.hpp"
#include "superres/noise.hpp"
#include "superres/rng.hpp"
#include "superres/scene.hpp"
#include "superres/version.hpp"
