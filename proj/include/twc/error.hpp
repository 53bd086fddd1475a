#pragma once

#include <stdexcept>
#include <string>

namespace twc {

// Base of every error thrown by the library. kind() is a stable,
// machine-parsable identifier used by the CLI and the HTTP layer.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TWC_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, what) {}       \
  };

// world / engine
TWC_DEFINE_ERROR(InadmissibleAction)
TWC_DEFINE_ERROR(AlreadyTerminal)
TWC_DEFINE_ERROR(UnknownVerb)
TWC_DEFINE_ERROR(UnresolvedEntity)
TWC_DEFINE_ERROR(AmbiguousEntity)

// gamegen
TWC_DEFINE_ERROR(DatasetTooSmall)
TWC_DEFINE_ERROR(ExhaustedVocabulary)
TWC_DEFINE_ERROR(InvalidDataset)
TWC_DEFINE_ERROR(InvalidGameSpec)

// tensor
TWC_DEFINE_ERROR(ShapeMismatch)
TWC_DEFINE_ERROR(NonFinite)
TWC_DEFINE_ERROR(NotScalar)
TWC_DEFINE_ERROR(CheckpointError)

// agents / train
TWC_DEFINE_ERROR(NoAdmissibleActions)
TWC_DEFINE_ERROR(EmptyEpisode)
TWC_DEFINE_ERROR(InvalidConfig)

// io
TWC_DEFINE_ERROR(IoError)

#undef TWC_DEFINE_ERROR

}  // namespace twc
