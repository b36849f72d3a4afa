// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace paradiff {

enum class ErrorKind {
    Shape,      // dimension / extent mismatch
    Domain,     // argument outside its documented range
    Parse,      // malformed input file
    Io,         // filesystem failure
    Integrity,  // corrupt or truncated binary artifact
    Compat,     // checkpoint / config mismatch
    Contract,   // API precondition violated
    Numeric,    // NaN/Inf or otherwise poisoned computation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

} // namespace paradiff
