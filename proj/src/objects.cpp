#include "egox/objects.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "egox/error.hpp"

namespace egox {

using nlohmann::json;

std::optional<Box> tight_box(std::span<const std::uint8_t> mask, int height, int width) {
  if (mask.size() != static_cast<std::size_t>(height) * width) throw Error("mask size mismatch");
  int r0 = height, r1 = -1, c0 = width, c1 = -1;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (mask[static_cast<std::size_t>(r) * width + c]) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) return std::nullopt;
  return Box{double(c0), double(r0), double(c1 + 1), double(r1 + 1)};
}

std::span<const std::uint8_t> TrackedObject::mask(int frame) const {
  const std::size_t plane = static_cast<std::size_t>(height()) * width();
  return masks.u8().subspan(frame * plane, plane);
}

std::vector<double> normalize_embedding(std::vector<double> f) {
  if (f.empty()) throw Error("empty embedding");
  double sq = 0.0;
  for (double x : f) {
    if (!std::isfinite(x)) throw Error("non-finite embedding");
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (std::abs(norm - 1.0) > kEmbeddingRenormTolerance)
    throw Error("embedding norm " + std::to_string(norm) + " is not unit");
  for (double& x : f) x /= norm;
  return f;
}

void validate_object(TrackedObject& obj) {
  if (obj.masks.dtype() != DType::U8 || obj.masks.rank() != 3)
    throw Error("object " + std::to_string(obj.id) + ": masks must be F x H x W u8");
  for (auto v : obj.masks.u8())
    if (v > 1) throw Error("object " + std::to_string(obj.id) + ": mask values must be 0/1");
  const int F = obj.frames();
  if (obj.boxes.empty()) obj.boxes.resize(F);
  if (static_cast<int>(obj.boxes.size()) != F)
    throw Error("object " + std::to_string(obj.id) + ": box count does not match frames");
  for (int f = 0; f < F; ++f) {
    const auto tight = tight_box(obj.mask(f), obj.height(), obj.width());
    if (obj.boxes[f] && (!tight || *obj.boxes[f] != *tight))
      throw Error("object " + std::to_string(obj.id) + ": box in frame " + std::to_string(f) +
                  " is not the tight box of its mask");
    if (!obj.boxes[f] && tight)
      throw Error("object " + std::to_string(obj.id) + ": missing box for non-empty mask in frame " +
                  std::to_string(f));
  }
  obj.embedding = normalize_embedding(std::move(obj.embedding));
}

TrackedObject make_object(int id, Tensor masks, std::vector<double> embedding) {
  TrackedObject obj{id, std::move(masks), {}, std::move(embedding)};
  if (obj.masks.dtype() != DType::U8 || obj.masks.rank() != 3)
    throw Error("object masks must be F x H x W u8");
  for (int f = 0; f < obj.frames(); ++f) obj.boxes.push_back(tight_box(obj.mask(f), obj.height(), obj.width()));
  validate_object(obj);
  return obj;
}

ObjectSet read_objects(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  ObjectSet set;
  const auto base = path.parent_path();
  try {
    std::size_t dim = 0;
    for (const auto& o : doc.at("objects")) {
      TrackedObject obj;
      obj.id = o.at("id").get<int>();
      obj.masks = read_tensor(base / o.at("masks").get<std::string>());
      if (o.contains("boxes")) {
        for (const auto& b : o.at("boxes")) {
          if (b.is_null()) {
            obj.boxes.emplace_back();
          } else {
            auto v = b.get<std::vector<double>>();
            if (v.size() != 4) throw Error("box needs 4 values");
            obj.boxes.push_back(Box{v[0], v[1], v[2], v[3]});
          }
        }
      }
      obj.embedding = o.at("embedding").get<std::vector<double>>();
      if (dim == 0) dim = obj.embedding.size();
      if (obj.embedding.size() != dim) throw Error("embedding dimension differs between objects");
      validate_object(obj);
      for (const auto& prev : set.objects)
        if (prev.id == obj.id) throw Error("duplicate object id " + std::to_string(obj.id));
      set.objects.push_back(std::move(obj));
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return set;
}

void write_objects(const std::filesystem::path& path, const ObjectSet& set) {
  json doc;
  doc["objects"] = json::array();
  const auto base = path.parent_path();
  const auto stem = path.stem().string();
  for (const auto& obj : set.objects) {
    const std::string mask_name = stem + "_obj" + std::to_string(obj.id) + ".egxt";
    write_tensor(base / mask_name, obj.masks);
    json boxes = json::array();
    for (const auto& b : obj.boxes) {
      if (b)
        boxes.push_back({b->x_min, b->y_min, b->x_max, b->y_max});
      else
        boxes.push_back(nullptr);
    }
    doc["objects"].push_back({{"id", obj.id}, {"masks", mask_name}, {"boxes", boxes}, {"embedding", obj.embedding}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace egox
