// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sliceout/autodiff.hpp"
#include "sliceout/config.hpp"
#include "sliceout/costmodel.hpp"
#include "sliceout/counters.hpp"
#include "sliceout/data.hpp"
#include "sliceout/errors.hpp"
#include "sliceout/gradcheck.hpp"
#include "sliceout/models.hpp"
#include "sliceout/nn.hpp"
#include "sliceout/slicing.hpp"
#include "sliceout/tensor.hpp"
#include "sliceout/trainer.hpp"
#include "sliceout/verify.hpp"
