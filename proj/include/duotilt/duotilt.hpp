#pragma once

#include "duotilt/estimators.hpp"
#include "duotilt/event.hpp"
#include "duotilt/finite_chain.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"
#include "duotilt/models/affine.hpp"
#include "duotilt/models/heston.hpp"
#include "duotilt/models/regime_ar1.hpp"
#include "duotilt/models/sird.hpp"
#include "duotilt/models/var_garch.hpp"
#include "duotilt/optimizer.hpp"
#include "duotilt/path.hpp"
#include "duotilt/presets.hpp"
#include "duotilt/rng.hpp"
#include "duotilt/stats.hpp"
#include "duotilt/tilting.hpp"
#include "duotilt/types.hpp"
