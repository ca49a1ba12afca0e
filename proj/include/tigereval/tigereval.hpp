// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tigereval/annotations.hpp"
#include "tigereval/box.hpp"
#include "tigereval/detection.hpp"
#include "tigereval/enhancement.hpp"
#include "tigereval/error.hpp"
#include "tigereval/image.hpp"
#include "tigereval/image_io.hpp"
#include "tigereval/metrics.hpp"
#include "tigereval/pipeline.hpp"
