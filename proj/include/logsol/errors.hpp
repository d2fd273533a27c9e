#pragma once

#include <stdexcept>
#include <string>

namespace logsol {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define LOGSOL_ERROR(Name)                                   \
    struct Name : Error {                                    \
        explicit Name(const std::string& what)               \
            : Error(std::string(#Name ": ") + what) {}       \
    }

LOGSOL_ERROR(InvalidExponent);
LOGSOL_ERROR(NonConvergence);
LOGSOL_ERROR(WindowTooNoisy);
LOGSOL_ERROR(QuadratureFailure);
LOGSOL_ERROR(GridTooSmall);
LOGSOL_ERROR(CollisionDetected);
LOGSOL_ERROR(StepFailure);
LOGSOL_ERROR(ResolutionTooLow);
LOGSOL_ERROR(StepTooLarge);
LOGSOL_ERROR(Overflow);
LOGSOL_ERROR(NoConvergence);
LOGSOL_ERROR(OutOfBasin);
LOGSOL_ERROR(FitLost);
LOGSOL_ERROR(NoSignChange);
LOGSOL_ERROR(WindowTooShort);
LOGSOL_ERROR(IoFailure);
LOGSOL_ERROR(InvalidConfig);

#undef LOGSOL_ERROR

}  // namespace logsol
