// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flexml/adc.hpp"
#include "flexml/analog.hpp"
#include "flexml/checkpoint.hpp"
#include "flexml/codesign.hpp"
#include "flexml/config.hpp"
#include "flexml/csv.hpp"
#include "flexml/errors.hpp"
#include "flexml/gating.hpp"
#include "flexml/hwcost.hpp"
#include "flexml/matrix.hpp"
#include "flexml/mlp.hpp"
#include "flexml/prune.hpp"
#include "flexml/rng.hpp"
#include "flexml/signal.hpp"
#include "flexml/synthetic.hpp"
