#include "atsim/error.hpp"

#include <iostream>
#include <mutex>

namespace atsim {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink_storage() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "atsim warning: " << msg << '\n';
  };
  return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  std::swap(sink_storage(), sink);
  return sink;
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (auto& sink = sink_storage()) sink(message);
}

}  // namespace atsim
