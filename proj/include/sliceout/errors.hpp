// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sliceout {

class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor / op errors
class shape_error : public error { public: using error::error; };
class bounds_error : public error { public: using error::error; };
class axis_error : public error { public: using error::error; };
class index_error : public error { public: using error::error; };
class label_error : public error { public: using error::error; };
class numeric_error : public error { public: using error::error; };

// Slicing / scheme errors
class rate_error : public error { public: using error::error; };
class width_error : public error { public: using error::error; };
class size_error : public error { public: using error::error; };
class alignment_error : public error { public: using error::error; };
class usage_error : public error { public: using error::error; };

// Trainer / IO errors
class training_error : public error { public: using error::error; };
class format_error : public error { public: using error::error; };
class io_error : public error { public: using error::error; };
class consistency_error : public error { public: using error::error; };
class config_error : public error { public: using error::error; };

} // namespace sliceout
