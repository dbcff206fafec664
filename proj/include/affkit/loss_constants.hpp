// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace affkit {

/// Floor applied to probabilities before taking a log anywhere in the library.
inline constexpr double kLogFloor = 1e-12;

}  // namespace affkit
