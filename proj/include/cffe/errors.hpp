#pragma once

#include <stdexcept>
#include <string>

namespace cffe {

// Base class for every condition the toolkit raises on purpose.
// what() is always a single line of the form "Kind: detail", so callers
// (the CLI in particular) can print it verbatim.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define CFFE_ERROR_KIND(NAME)                                             \
  struct NAME : Error {                                                   \
    explicit NAME(const std::string& msg) : Error(std::string(#NAME) + ": " + msg) {} \
  }

// panel ingestion
CFFE_ERROR_KIND(MalformedCsv);
CFFE_ERROR_KIND(DuplicateKey);
CFFE_ERROR_KIND(SchemaMismatch);
CFFE_ERROR_KIND(InvalidPanel);
CFFE_ERROR_KIND(EmptyGroup);
CFFE_ERROR_KIND(YearOutOfRange);

// dgp / configs
CFFE_ERROR_KIND(InvalidSpec);

// forest
CFFE_ERROR_KIND(InsufficientData);
CFFE_ERROR_KIND(NoSplits);
CFFE_ERROR_KIND(TooFewTrees);
CFFE_ERROR_KIND(DimensionMismatch);

// classical estimators
CFFE_ERROR_KIND(RankDeficient);
CFFE_ERROR_KIND(TooFewClusters);
CFFE_ERROR_KIND(NoNeverTreated);
CFFE_ERROR_KIND(NoPrePeriod);
CFFE_ERROR_KIND(WindowTooSparse);

// inference
CFFE_ERROR_KIND(SingleCluster);
CFFE_ERROR_KIND(TooFewValidReplicates);
CFFE_ERROR_KIND(FakeDateTooLate);
CFFE_ERROR_KIND(AssignedCountryIsTreated);
CFFE_ERROR_KIND(TooFewTreated);
CFFE_ERROR_KIND(SingularVcov);
CFFE_ERROR_KIND(NoPrePeriods);

// aggregation
CFFE_ERROR_KIND(EmptyHorizon);
CFFE_ERROR_KIND(GapInSupport);
CFFE_ERROR_KIND(NoObservationsAtK);

// dsge
CFFE_ERROR_KIND(InvalidCalibration);
CFFE_ERROR_KIND(SingularSystem);
CFFE_ERROR_KIND(HorizonTooShort);
CFFE_ERROR_KIND(WindowExceedsHorizon);

// io
CFFE_ERROR_KIND(IoFailure);

#undef CFFE_ERROR_KIND

}  // namespace cffe
