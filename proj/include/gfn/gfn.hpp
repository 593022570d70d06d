// Copyright (c) 2026 The gfnfair Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "gfn/adam.hpp"
#include "gfn/encoders.hpp"
#include "gfn/error.hpp"
#include "gfn/evaluation.hpp"
#include "gfn/fusion.hpp"
#include "gfn/harness.hpp"
#include "gfn/io.hpp"
#include "gfn/linalg.hpp"
#include "gfn/mlp.hpp"
#include "gfn/rng.hpp"
#include "gfn/speaker_sim.hpp"
#include "gfn/svg_chart.hpp"
#include "gfn/trials.hpp"
