#pragma once

#include <stdexcept>
#include <string>

namespace pcw {

// Base of every error the library throws. The `what()` text is a single line
// suitable for a CLI diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PCW_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

PCW_DEFINE_ERROR(ShapeError)
PCW_DEFINE_ERROR(AttentionError)
PCW_DEFINE_ERROR(LayoutError)
PCW_DEFINE_ERROR(ConfigError)
PCW_DEFINE_ERROR(LoadError)
PCW_DEFINE_ERROR(PositionError)
PCW_DEFINE_ERROR(GenerationError)
PCW_DEFINE_ERROR(TokenizerError)
PCW_DEFINE_ERROR(BudgetError)
PCW_DEFINE_ERROR(PackingError)
PCW_DEFINE_ERROR(TemplateError)
PCW_DEFINE_ERROR(DatasetError)
PCW_DEFINE_ERROR(TrieError)
PCW_DEFINE_ERROR(StatsError)

#undef PCW_DEFINE_ERROR

}  // namespace pcw
