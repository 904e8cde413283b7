#include "cephmark/codec.hpp"

namespace cephmark {

const char* frame_name(Frame f) {
  switch (f) {
    case Frame::original: return "original";
    case Frame::cropped: return "cropped";
    case Frame::global_scaled: return "global-scaled";
    case Frame::local_scaled: return "local-scaled";
    case Frame::patch_local: return "patch-local";
  }
  return "unknown";
}

Frame frame_from_name(const std::string& name) {
  for (Frame f : {Frame::original, Frame::cropped, Frame::global_scaled, Frame::local_scaled,
                  Frame::patch_local})
    if (name == frame_name(f)) return f;
  throw ParseError("unknown frame name: " + name);
}

LandmarkSet rescale_landmarks(const LandmarkSet& landmarks, double factor, Frame target_frame) {
  if (!(factor > 0.0)) throw ShapeError("rescale_landmarks: factor must be positive");
  LandmarkSet out = landmarks;
  for (auto& p : out.points) {
    p.x *= factor;
    p.y *= factor;
  }
  out.frame = target_frame;
  return out;
}

LandmarkSet translate_landmarks(const LandmarkSet& landmarks, double dx, double dy,
                                Frame target_frame) {
  LandmarkSet out = landmarks;
  for (auto& p : out.points) {
    p.x += dx;
    p.y += dy;
  }
  out.frame = target_frame;
  return out;
}

}  // namespace cephmark
