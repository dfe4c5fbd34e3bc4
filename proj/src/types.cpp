#include "halospan/types.hpp"

#include <string>

#include "halospan/errors.hpp"

namespace halospan {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::QA: return "QA";
    case Task::Data2Text: return "Data2Text";
    case Task::Summarisation: return "Summarisation";
    case Task::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(HalluType type) {
  switch (type) {
    case HalluType::SInfo: return "SInfo";
    case HalluType::EInfo: return "EInfo";
    case HalluType::SConf: return "SConf";
    case HalluType::EConf: return "EConf";
  }
  return "SInfo";
}

Task parse_task(std::string_view name) {
  if (name == "QA") return Task::QA;
  if (name == "Data2Text" || name == "Data2txt") return Task::Data2Text;
  if (name == "Summarisation" || name == "Summary") return Task::Summarisation;
  if (name == "Other") return Task::Other;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

HalluType parse_hallu_type(std::string_view name) {
  if (name == "SInfo" || name == "Subtle Baseless Info") return HalluType::SInfo;
  if (name == "EInfo" || name == "Evident Baseless Info") return HalluType::EInfo;
  if (name == "SConf" || name == "Subtle Conflict") return HalluType::SConf;
  if (name == "EConf" || name == "Evident Conflict") return HalluType::EConf;
  throw ValidationError("unknown hallucination type '" + std::string(name) + "'");
}

}  // namespace halospan
