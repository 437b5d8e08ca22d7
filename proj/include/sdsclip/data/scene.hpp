#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/tensor.hpp"

namespace sdsclip::data {

enum class ShapeKind : int { Circle = 0, Square = 1, Triangle = 2 };
enum class ColorKind : int { Red = 0, Green = 1, Blue = 2, Yellow = 3 };
enum class Predicate : int { LeftOf = 0, RightOf = 1, Above = 2, Below = 3 };

inline const char* shape_word(ShapeKind s) {
  switch (s) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    default: return "triangle";
  }
}

inline const char* color_word(ColorKind c) {
  switch (c) {
    case ColorKind::Red: return "red";
    case ColorKind::Green: return "green";
    case ColorKind::Blue: return "blue";
    default: return "yellow";
  }
}

inline std::array<double, 3> color_rgb(ColorKind c) {
  switch (c) {
    case ColorKind::Red: return {1.0, 0.0, 0.0};
    case ColorKind::Green: return {0.0, 1.0, 0.0};
    case ColorKind::Blue: return {0.0, 0.0, 1.0};
    default: return {1.0, 1.0, 0.0};
  }
}

inline std::vector<std::string> predicate_words(Predicate p) {
  switch (p) {
    case Predicate::LeftOf: return {"left", "of"};
    case Predicate::RightOf: return {"right", "of"};
    case Predicate::Above: return {"above"};
    default: return {"below"};
  }
}

inline Predicate inverse_predicate(Predicate p) {
  switch (p) {
    case Predicate::LeftOf: return Predicate::RightOf;
    case Predicate::RightOf: return Predicate::LeftOf;
    case Predicate::Above: return Predicate::Below;
    default: return Predicate::Above;
  }
}

// cell-coordinate semantics: left-of means same row, strictly smaller column
inline bool predicate_holds(Predicate p, int r1, int c1, int r2, int c2) {
  switch (p) {
    case Predicate::LeftOf: return r1 == r2 && c1 < c2;
    case Predicate::RightOf: return r1 == r2 && c1 > c2;
    case Predicate::Above: return c1 == c2 && r1 < r2;
    default: return c1 == c2 && r1 > r2;
  }
}

struct SceneObject {
  ShapeKind shape;
  ColorKind color;
  int row = 0;
  int col = 0;

  bool same_bundle(const SceneObject& o) const { return shape == o.shape && color == o.color; }
};

struct RelationFact {
  std::size_t subject;
  Predicate pred;
  std::size_t object;
};

struct Scene {
  int grid_rows = 3;
  int grid_cols = 3;
  std::vector<SceneObject> objects;

  void validate() const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      if (o.row < 0 || o.row >= grid_rows || o.col < 0 || o.col >= grid_cols)
        throw std::invalid_argument("scene: object outside grid at (" + std::to_string(o.row) + ", " +
                                    std::to_string(o.col) + ")");
      for (std::size_t j = i + 1; j < objects.size(); ++j) {
        if (objects[j].row == o.row && objects[j].col == o.col)
          throw std::invalid_argument("scene: two objects share cell (" + std::to_string(o.row) + ", " +
                                      std::to_string(o.col) + ")");
      }
    }
  }

  // all pairwise relations implied by cell coordinates
  std::vector<RelationFact> relation_facts() const {
    std::vector<RelationFact> facts;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      for (std::size_t j = 0; j < objects.size(); ++j) {
        if (i == j) continue;
        for (Predicate p : {Predicate::LeftOf, Predicate::RightOf, Predicate::Above, Predicate::Below}) {
          if (predicate_holds(p, objects[i].row, objects[i].col, objects[j].row, objects[j].col))
            facts.push_back({i, p, j});
        }
      }
    }
    return facts;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ULL;
    };
    mix(static_cast<std::uint64_t>(grid_rows));
    mix(static_cast<std::uint64_t>(grid_cols));
    for (const auto& o : objects) {
      mix(static_cast<std::uint64_t>(o.shape));
      mix(static_cast<std::uint64_t>(o.color));
      mix(static_cast<std::uint64_t>(o.row));
      mix(static_cast<std::uint64_t>(o.col));
    }
    return h;
  }
};

// Deterministic rasterizer: white background, each object drawn as a filled
// shape inside its cell. Output is 3 x R x R with values in [0, 1].
inline Tensor render(const Scene& scene, int resolution) {
  scene.validate();
  if (resolution % scene.grid_rows != 0 || resolution % scene.grid_cols != 0)
    throw std::invalid_argument("render: resolution " + std::to_string(resolution) +
                                " not divisible by grid " + std::to_string(scene.grid_rows) + "x" +
                                std::to_string(scene.grid_cols));
  const int r = resolution;
  std::vector<double> img(static_cast<std::size_t>(3 * r * r), 1.0);
  const double cell_h = static_cast<double>(r) / scene.grid_rows;
  const double cell_w = static_cast<double>(r) / scene.grid_cols;

  for (const auto& obj : scene.objects) {
    const auto rgb = color_rgb(obj.color);
    const double y0 = obj.row * cell_h, x0 = obj.col * cell_w;
    const double cy = y0 + cell_h / 2.0, cx = x0 + cell_w / 2.0;
    const double s = std::min(cell_h, cell_w);
    for (int y = static_cast<int>(y0); y < static_cast<int>(y0 + cell_h); ++y) {
      for (int x = static_cast<int>(x0); x < static_cast<int>(x0 + cell_w); ++x) {
        const double py = y + 0.5, px = x + 0.5;
        bool inside = false;
        switch (obj.shape) {
          case ShapeKind::Circle: {
            const double rad = 0.38 * s;
            inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= rad * rad;
            break;
          }
          case ShapeKind::Square: {
            const double m = 0.16 * s;
            inside = px >= x0 + m && px < x0 + cell_w - m && py >= y0 + m && py < y0 + cell_h - m;
            break;
          }
          case ShapeKind::Triangle: {
            const double m = 0.12 * s;
            const double top = y0 + m, bottom = y0 + cell_h - m;
            if (py >= top && py <= bottom) {
              const double t = (py - top) / (bottom - top);
              const double halfw = t * (cell_w / 2.0 - m);
              inside = px >= cx - halfw && px <= cx + halfw;
            }
            break;
          }
        }
        if (inside) {
          for (int ch = 0; ch < 3; ++ch)
            img[static_cast<std::size_t>((ch * r + y) * r + x)] = rgb[static_cast<std::size_t>(ch)];
        }
      }
    }
  }
  return Tensor({3, static_cast<std::size_t>(r), static_cast<std::size_t>(r)}, std::move(img));
}

}  // namespace sdsclip::data
