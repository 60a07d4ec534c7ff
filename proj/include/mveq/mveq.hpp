// Copyright 2026 The mveq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MVEQ_MVEQ_HPP_
#define MVEQ_MVEQ_HPP_

#include "mveq/common.hpp"
#include "mveq/convhead.hpp"
#include "mveq/equivariance.hpp"
#include "mveq/featstore.hpp"
#include "mveq/geometry.hpp"
#include "mveq/manifest.hpp"
#include "mveq/matching.hpp"
#include "mveq/metrics.hpp"
#include "mveq/pose.hpp"
#include "mveq/report.hpp"
#include "mveq/semcorr.hpp"
#include "mveq/smoothap.hpp"
#include "mveq/synth.hpp"
#include "mveq/tracking.hpp"
#include "mveq/train.hpp"

#endif  // MVEQ_MVEQ_HPP_
