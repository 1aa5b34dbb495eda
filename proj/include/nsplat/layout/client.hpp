#pragma once

#include <chrono>
#include <string>

#include "nsplat/layout/layout.hpp"

namespace nsplat::layout {

enum class FetchStatus {
  ok,
  transport_error,   // unreachable, timeout, non-2xx status
  validation_error,  // 2xx but the body failed layout validation
};

// Typed result so pipeline callers can fall back without exception plumbing.
struct LayoutFetch {
  FetchStatus status = FetchStatus::transport_error;
  std::string message;
  SceneLayout layout;  // populated when status == ok

  bool ok() const { return status == FetchStatus::ok; }
};

// POSTs {"description": ..., "schema_version": 1} as JSON to an http://
// endpoint and parses the response with parse_layout_json. Never throws for
// endpoint or schema failures.
LayoutFetch request_layout(const std::string& endpoint,
                           const std::string& description,
                           std::chrono::milliseconds timeout);

}  // namespace nsplat::layout
