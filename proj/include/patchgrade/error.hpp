/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <stdexcept>
#include <string>

namespace patchgrade {

/// Base class for every error raised by the library. The CLI maps any
/// Error escaping a subcommand to a nonzero exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PATCHGRADE_DEFINE_ERROR(Name)             \
    class Name : public Error {                   \
    public:                                       \
        using Error::Error;                       \
    }

PATCHGRADE_DEFINE_ERROR(ValidationError);
PATCHGRADE_DEFINE_ERROR(LoadError);
PATCHGRADE_DEFINE_ERROR(CapacityError);
PATCHGRADE_DEFINE_ERROR(IncompatibleError);
PATCHGRADE_DEFINE_ERROR(SpecError);
PATCHGRADE_DEFINE_ERROR(ShapeError);
PATCHGRADE_DEFINE_ERROR(ParameterError);
PATCHGRADE_DEFINE_ERROR(PairingError);
PATCHGRADE_DEFINE_ERROR(PreconditionError);
PATCHGRADE_DEFINE_ERROR(DivergenceError);
PATCHGRADE_DEFINE_ERROR(ReferenceError);
PATCHGRADE_DEFINE_ERROR(BankError);
PATCHGRADE_DEFINE_ERROR(UndefinedMetricError);
PATCHGRADE_DEFINE_ERROR(OrderingError);
PATCHGRADE_DEFINE_ERROR(ConfigError);
PATCHGRADE_DEFINE_ERROR(ScorerError);
PATCHGRADE_DEFINE_ERROR(IoError);

#undef PATCHGRADE_DEFINE_ERROR

}  // namespace patchgrade
