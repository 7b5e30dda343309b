/*
 * Copyright 2026 The recheck Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "recheck/behavioral.hpp"
#include "recheck/datamodel.hpp"
#include "recheck/errors.hpp"
#include "recheck/evaluation.hpp"
#include "recheck/folds.hpp"
#include "recheck/metrics.hpp"
#include "recheck/model_protocol.hpp"
#include "recheck/render.hpp"
#include "recheck/scoring.hpp"
#include "recheck/slices.hpp"
