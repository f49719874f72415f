#pragma once

#include <stdexcept>
#include <string>

namespace prepare {

/// Base of every error raised by the library. Each failure mode named in the
/// data contracts gets its own subtype so callers can catch selectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define PREPARE_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return #Name; }   \
  }

PREPARE_DEFINE_ERROR(MalformedRun);
PREPARE_DEFINE_ERROR(SchemaMismatch);
PREPARE_DEFINE_ERROR(InsufficientHistory);
PREPARE_DEFINE_ERROR(IndexError);
PREPARE_DEFINE_ERROR(InvalidConfig);
PREPARE_DEFINE_ERROR(ShapeError);
PREPARE_DEFINE_ERROR(DegenerateLabels);
PREPARE_DEFINE_ERROR(TooFewMinority);
PREPARE_DEFINE_ERROR(EmptyNode);
PREPARE_DEFINE_ERROR(NoSplits);
PREPARE_DEFINE_ERROR(InsufficientData);
PREPARE_DEFINE_ERROR(ClockError);
PREPARE_DEFINE_ERROR(NoInput);
PREPARE_DEFINE_ERROR(BindError);
PREPARE_DEFINE_ERROR(IncompatibleModel);
PREPARE_DEFINE_ERROR(IoError);

#undef PREPARE_DEFINE_ERROR

/// Non-finite sample; carries the offending frame index.
class CorruptSample : public Error {
 public:
  CorruptSample(std::size_t frame_index, const std::string& what)
      : Error(what), frame_index_(frame_index) {}
  const char* kind() const noexcept override { return "CorruptSample"; }
  std::size_t frame_index() const noexcept { return frame_index_; }

 private:
  std::size_t frame_index_;
};

}  // namespace prepare
