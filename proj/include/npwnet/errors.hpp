#pragma once

#include <stdexcept>
#include <string>

namespace npwnet {

//! Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define NPWNET_DEFINE_ERROR(name)                                             \
  struct name : Error {                                                       \
    explicit name(const std::string& msg) : Error(msg) {}                     \
  }

// netcore
NPWNET_DEFINE_ERROR(SelfLoop);
NPWNET_DEFINE_ERROR(DuplicateEdge);
NPWNET_DEFINE_ERROR(IndexOutOfRange);

// simgen
NPWNET_DEFINE_ERROR(InvalidSimplex);

// locdens
NPWNET_DEFINE_ERROR(DegenerateSample);
NPWNET_DEFINE_ERROR(NonFiniteObjective);
NPWNET_DEFINE_ERROR(LocalFitDiverged);
NPWNET_DEFINE_ERROR(ZeroMassDensity);

// varem
NPWNET_DEFINE_ERROR(ShapeMismatch);
NPWNET_DEFINE_ERROR(NonPositiveGammaHat);
NPWNET_DEFINE_ERROR(InfeasibleCoefficients);
NPWNET_DEFINE_ERROR(NonFiniteTheta);
NPWNET_DEFINE_ERROR(EmptyBlock);
NPWNET_DEFINE_ERROR(TooLargeToEnumerate);
NPWNET_DEFINE_ERROR(AllRestartsFailed);

// modelsel
NPWNET_DEFINE_ERROR(MissingDensities);

// metrics
NPWNET_DEFINE_ERROR(LengthMismatch);
NPWNET_DEFINE_ERROR(KTooLargeForExactMatch);

// cli
NPWNET_DEFINE_ERROR(MalformedEdgeList);
NPWNET_DEFINE_ERROR(MissingTruth);
NPWNET_DEFINE_ERROR(InvalidConfig);
NPWNET_DEFINE_ERROR(IoError);

#undef NPWNET_DEFINE_ERROR

} // namespace npwnet
