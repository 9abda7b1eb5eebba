#pragma once

#include <stdexcept>
#include <string>

namespace edgelift {

struct invalid_depth_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct behind_camera_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct empty_crop_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct insufficient_depth_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct degenerate_geometry_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct not_visible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wire / transport failures (edgenet).
struct framing_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct oversize_error : framing_error {
  using framing_error::framing_error;
};

struct transport_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct timeout_error : transport_error {
  using transport_error::transport_error;
};

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace edgelift
