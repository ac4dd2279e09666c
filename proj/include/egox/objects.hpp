#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "egox/tensor.hpp"

namespace egox {

/// Axis-aligned box in continuous pixel coordinates. A mask pixel at
/// (row i, col j) covers [j, j+1) x [i, i+1), so the tight box of a mask is
/// [min_col, min_row, max_col + 1, max_row + 1].
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Tight box of a row-major H x W binary mask; nullopt when the mask is empty.
std::optional<Box> tight_box(std::span<const std::uint8_t> mask, int height, int width);

/// One tracked object: per-frame masks (F x H x W u8), per-frame boxes
/// (nullopt where the object is absent) and a unit-norm appearance embedding.
struct TrackedObject {
  int id = 0;
  Tensor masks;
  std::vector<std::optional<Box>> boxes;
  std::vector<double> embedding;

  int frames() const { return static_cast<int>(masks.dim(0)); }
  int height() const { return static_cast<int>(masks.dim(1)); }
  int width() const { return static_cast<int>(masks.dim(2)); }
  std::span<const std::uint8_t> mask(int frame) const;
};

struct ObjectSet {
  std::vector<TrackedObject> objects;
};

/// Embeddings within 1e-2 of unit norm are renormalized; anything further is rejected.
inline constexpr double kEmbeddingRenormTolerance = 1e-2;
std::vector<double> normalize_embedding(std::vector<double> f);

/// Builds an object from masks alone, deriving tight boxes.
TrackedObject make_object(int id, Tensor masks, std::vector<double> embedding);

/// Checks mask shape, box tightness and embedding norm; fills missing boxes.
void validate_object(TrackedObject& obj);

/// JSON annotation file. Mask tensors are separate EGXT files referenced by
/// path relative to the JSON file's directory:
/// {"objects": [{"id": 0, "masks": "obj0.egxt", "boxes": [[x0,y0,x1,y1] | null, ...],
///               "embedding": [...]}]}
ObjectSet read_objects(const std::filesystem::path& path);

/// Writes the JSON plus one `<stem>_obj<id>.egxt` mask file per object.
void write_objects(const std::filesystem::path& path, const ObjectSet& set);

}  // namespace egox
