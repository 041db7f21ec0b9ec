//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_WORLD_HPP
#define GROUNDER_WORLD_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/textpipe.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Shapes world: colored shapes on a 4x4 grid, rendered to 64x64, described by
// template-grammar expressions. Every expression is machine-checkable against
// the scene, which is what makes the false-alarm labels exact.
// ---------------------------------------------------------------------------

enum class ObjShape { kCircle, kSquare, kTriangle };
enum class ObjColor { kRed, kGreen, kBlue, kYellow };
enum class ObjSize { kSmall, kLarge };
enum class Relation { kLeftOf, kRightOf, kAbove, kBelow };

enum class VariantKind {
  kRegular,
  kRandomMismatch,
  kNounSwap,
  kAdjectiveSwap,
  kSpatialSwap,
  kAttributeNegation,
};

inline const char* to_string(ObjShape s) {
  switch (s) {
    case ObjShape::kCircle: return "circle";
    case ObjShape::kSquare: return "square";
    case ObjShape::kTriangle: return "triangle";
  }
  return "";
}
inline const char* to_string(ObjColor c) {
  switch (c) {
    case ObjColor::kRed: return "red";
    case ObjColor::kGreen: return "green";
    case ObjColor::kBlue: return "blue";
    case ObjColor::kYellow: return "yellow";
  }
  return "";
}
inline const char* to_string(ObjSize s) {
  return s == ObjSize::kSmall ? "small" : "large";
}
inline const char* to_string(VariantKind k) {
  switch (k) {
    case VariantKind::kRegular: return "regular";
    case VariantKind::kRandomMismatch: return "random_mismatch";
    case VariantKind::kNounSwap: return "noun_swap";
    case VariantKind::kAdjectiveSwap: return "adjective_swap";
    case VariantKind::kSpatialSwap: return "spatial_swap";
    case VariantKind::kAttributeNegation: return "attribute_negation";
  }
  return "";
}

inline VariantKind variant_kind_from_string(const std::string& s) {
  if (s == "regular") return VariantKind::kRegular;
  if (s == "random_mismatch") return VariantKind::kRandomMismatch;
  if (s == "noun_swap") return VariantKind::kNounSwap;
  if (s == "adjective_swap") return VariantKind::kAdjectiveSwap;
  if (s == "spatial_swap") return VariantKind::kSpatialSwap;
  if (s == "attribute_negation") return VariantKind::kAttributeNegation;
  throw ParseError("unknown variant kind: " + s);
}
inline ObjShape shape_from_string(const std::string& s) {
  if (s == "circle") return ObjShape::kCircle;
  if (s == "square") return ObjShape::kSquare;
  if (s == "triangle") return ObjShape::kTriangle;
  throw ParseError("unknown shape: " + s);
}
inline ObjColor color_from_string(const std::string& s) {
  if (s == "red") return ObjColor::kRed;
  if (s == "green") return ObjColor::kGreen;
  if (s == "blue") return ObjColor::kBlue;
  if (s == "yellow") return ObjColor::kYellow;
  throw ParseError("unknown color: " + s);
}
inline ObjSize size_from_string(const std::string& s) {
  if (s == "small") return ObjSize::kSmall;
  if (s == "large") return ObjSize::kLarge;
  throw ParseError("unknown size: " + s);
}

// Integer pixel box, corners ordered, end-exclusive interpretation for
// rasterization (pixels x1..x2-1 are covered).
struct PixelBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool operator==(const PixelBox&) const = default;
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  bool intersects(const PixelBox& o) const {
    return x1 < o.x2 && o.x1 < x2 && y1 < o.y2 && o.y1 < y2;
  }
};

struct ShapeObject {
  int id = 0;
  ObjShape shape = ObjShape::kCircle;
  ObjColor color = ObjColor::kRed;
  ObjSize size = ObjSize::kSmall;
  int row = 0, col = 0;
  PixelBox box;

  bool operator==(const ShapeObject&) const = default;
};

struct WorldConfig {
  int image_size = 64;
  int grid = 4;
  int min_objects = 2;
  int max_objects = 6;
  int retry_budget = 100;

  int cell_size() const { return image_size / grid; }

  void validate() const {
    if (grid < 2) throw ValidationError("world: grid must be at least 2");
    if (image_size < grid || image_size % grid != 0)
      throw ValidationError("world: image size must be a positive multiple of grid");
    if (cell_size() < 4)
      throw ValidationError("world: cells must be at least 4 pixels");
    if (min_objects < 2 || max_objects < min_objects)
      throw ValidationError("world: need 2 <= min_objects <= max_objects");
    if (max_objects > grid * grid)
      throw ValidationError("world: more objects than grid cells");
    if (retry_budget < 1) throw ValidationError("world: retry budget must be positive");
  }
};

struct SceneSample {
  std::uint64_t scene_id = 0;
  std::vector<ShapeObject> objects;
  std::vector<float> raster;  // 3 * S * S, row-major per channel, in [0,1]
  std::string expression;
  int target_id = -1;  // -1 when no target exists
  PixelBox gt_box;     // meaningful iff exists
  bool exists = false;
  VariantKind variant_kind = VariantKind::kRegular;

  bool operator==(const SceneSample&) const = default;
};

// ---------------------------------------------------------------------------
// Template grammar and semantic matching.
//
//   expr       := "the" nounphrase [postmod]
//   nounphrase := (color|size)* shapenoun
//   postmod    := rel "the" nounphrase | ("with"|"without") color "color"
//   rel        := "left" "of" | "right" "of" | "above" | "below"
//
// A definite anchor ("the red circle" after a relation) that does not match
// exactly one object is a failed reference; the whole expression then matches
// nothing.
// ---------------------------------------------------------------------------

struct AttrPred {
  std::optional<ObjShape> shape;
  std::vector<ObjColor> colors;        // conjunction
  std::vector<ObjSize> sizes;          // conjunction
  std::optional<ObjColor> with_color;  // "with X color"
  std::optional<ObjColor> without_color;

  bool matches(const ShapeObject& o) const {
    if (shape && o.shape != *shape) return false;
    for (ObjColor c : colors)
      if (o.color != c) return false;
    for (ObjSize s : sizes)
      if (o.size != s) return false;
    if (with_color && o.color != *with_color) return false;
    if (without_color && o.color == *without_color) return false;
    return true;
  }
};

struct ParsedExpr {
  AttrPred head;
  std::optional<Relation> rel;
  std::optional<AttrPred> anchor;
};

namespace worlddetail {

inline bool is_shape_word(const std::string& w) {
  return w == "circle" || w == "square" || w == "triangle";
}
inline bool is_color_word(const std::string& w) {
  return w == "red" || w == "green" || w == "blue" || w == "yellow";
}
inline bool is_size_word(const std::string& w) {
  return w == "small" || w == "large";
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string w;
  for (char ch : s) {
    if (ch == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

// nounphrase := (color|size)* shapenoun
inline AttrPred parse_nounphrase(const std::vector<std::string>& w, std::size_t& i) {
  AttrPred p;
  while (i < w.size() && (is_color_word(w[i]) || is_size_word(w[i]))) {
    if (is_color_word(w[i])) p.colors.push_back(color_from_string(w[i]));
    else p.sizes.push_back(size_from_string(w[i]));
    ++i;
  }
  if (i >= w.size() || !is_shape_word(w[i]))
    throw ParseError("expected a shape noun in expression");
  p.shape = shape_from_string(w[i]);
  ++i;
  return p;
}

}  // namespace worlddetail

inline ParsedExpr parse_expression(const std::string& expression) {
  using namespace worlddetail;
  std::vector<std::string> w = split_words(expression);
  std::size_t i = 0;
  if (w.empty() || w[i] != "the") throw ParseError("expression must start with 'the'");
  ++i;
  ParsedExpr e;
  e.head = parse_nounphrase(w, i);
  if (i == w.size()) return e;
  if (w[i] == "with" || w[i] == "without") {
    bool negated = w[i] == "without";
    ++i;
    if (i >= w.size() || !is_color_word(w[i]))
      throw ParseError("expected a color after with/without");
    ObjColor c = color_from_string(w[i]);
    ++i;
    if (i >= w.size() || w[i] != "color")
      throw ParseError("expected 'color' after with/without phrase");
    ++i;
    if (negated) e.head.without_color = c;
    else e.head.with_color = c;
  } else {
    Relation rel;
    if (w[i] == "above") { rel = Relation::kAbove; ++i; }
    else if (w[i] == "below") { rel = Relation::kBelow; ++i; }
    else if ((w[i] == "left" || w[i] == "right") && i + 1 < w.size() && w[i + 1] == "of") {
      rel = (w[i] == "left") ? Relation::kLeftOf : Relation::kRightOf;
      i += 2;
    } else {
      throw ParseError("unrecognized postmodifier: " + w[i]);
    }
    if (i >= w.size() || w[i] != "the")
      throw ParseError("expected 'the' after relation");
    ++i;
    e.rel = rel;
    e.anchor = parse_nounphrase(w, i);
  }
  if (i != w.size()) throw ParseError("trailing words in expression");
  return e;
}

// Center-based spatial semantics on the relevant axis only.
inline bool relation_holds(Relation r, const ShapeObject& a, const ShapeObject& b) {
  switch (r) {
    case Relation::kLeftOf: return a.box.cx() < b.box.cx();
    case Relation::kRightOf: return a.box.cx() > b.box.cx();
    case Relation::kAbove: return a.box.cy() < b.box.cy();
    case Relation::kBelow: return a.box.cy() > b.box.cy();
  }
  return false;
}

// Exact oracle: ids of all objects satisfying the expression.
inline std::set<int> semantic_match(const std::string& expression,
                                    const std::vector<ShapeObject>& objects) {
  ParsedExpr e = parse_expression(expression);
  std::set<int> out;
  const ShapeObject* anchor = nullptr;
  if (e.rel) {
    int anchor_count = 0;
    for (const auto& o : objects) {
      if (e.anchor->matches(o)) {
        anchor = &o;
        ++anchor_count;
      }
    }
    if (anchor_count != 1) return {};  // failed definite reference
  }
  for (const auto& o : objects) {
    if (!e.head.matches(o)) continue;
    if (e.rel) {
      if (o.id == anchor->id) continue;
      if (!relation_holds(*e.rel, o, *anchor)) continue;
    }
    out.insert(o.id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rasterization.
// ---------------------------------------------------------------------------

namespace worlddetail {

inline std::array<float, 3> rgb(ObjColor c) {
  switch (c) {
    case ObjColor::kRed: return {1.f, 0.f, 0.f};
    case ObjColor::kGreen: return {0.f, 1.f, 0.f};
    case ObjColor::kBlue: return {0.f, 0.f, 1.f};
    case ObjColor::kYellow: return {1.f, 1.f, 0.f};
  }
  return {0.f, 0.f, 0.f};
}

inline bool point_in_triangle(double px, double py, double ax, double ay,
                              double bx, double by, double cx, double cy) {
  auto side = [&](double x1, double y1, double x2, double y2) {
    return (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
  };
  double d1 = side(ax, ay, bx, by);
  double d2 = side(bx, by, cx, cy);
  double d3 = side(cx, cy, ax, ay);
  bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
  bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
  return !(has_neg && has_pos);
}

inline bool covers_pixel(const ShapeObject& o, int px, int py) {
  const double x = px + 0.5;
  const double y = py + 0.5;
  const auto& b = o.box;
  if (x < b.x1 || x > b.x2 || y < b.y1 || y > b.y2) return false;
  switch (o.shape) {
    case ObjShape::kSquare:
      return true;
    case ObjShape::kCircle: {
      double r = 0.5 * std::min(b.width(), b.height());
      double dx = x - b.cx();
      double dy = y - b.cy();
      return dx * dx + dy * dy <= r * r;
    }
    case ObjShape::kTriangle:
      return point_in_triangle(x, y, b.cx(), b.y1, b.x1, b.y2, b.x2, b.y2);
  }
  return false;
}

}  // namespace worlddetail

inline std::vector<float> rasterize(const std::vector<ShapeObject>& objects,
                                    const WorldConfig& config) {
  const int s = config.image_size;
  std::vector<float> img(static_cast<std::size_t>(3) * s * s, 0.f);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& b = objects[i].box;
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > s || b.y2 > s || b.x1 >= b.x2 || b.y1 >= b.y2)
      throw GenerationError("rasterize: object box out of bounds");
    for (std::size_t j = i + 1; j < objects.size(); ++j)
      if (b.intersects(objects[j].box))
        throw GenerationError("rasterize: overlapping object boxes");
  }
  for (const auto& o : objects) {
    auto color = worlddetail::rgb(o.color);
    for (int py = o.box.y1; py < o.box.y2; ++py) {
      for (int px = o.box.x1; px < o.box.x2; ++px) {
        if (!worlddetail::covers_pixel(o, px, py)) continue;
        for (int c = 0; c < 3; ++c)
          img[(static_cast<std::size_t>(c) * s + py) * s + px] = color[static_cast<std::size_t>(c)];
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Scene generation.
// ---------------------------------------------------------------------------

// Constrains the expression form the generator must produce; used to steer
// sources for specific false-alarm kinds.
enum class ExprForm { kAny, kSpatial, kWithColor, kHasColorWord };

namespace worlddetail {

inline PixelBox box_for_cell(int row, int col, ObjSize size, const WorldConfig& cfg) {
  const int cell = cfg.cell_size();
  // Margins scale with the cell so small boxes stay non-degenerate at any
  // raster resolution (cell 16 gives the classic 1px / 4px margins).
  const int margin = (size == ObjSize::kLarge) ? std::max(1, cell / 16)
                                               : std::max(1, cell / 4);
  const int x0 = col * cell;
  const int y0 = row * cell;
  return {x0 + margin, y0 + margin, x0 + cell - margin, y0 + cell - margin};
}

struct Candidate {
  std::string text;
  ExprForm form;
};

inline std::string unary_text(const ShapeObject& o, bool with_size, bool with_color) {
  std::string s = "the ";
  if (with_size) { s += to_string(o.size); s += ' '; }
  if (with_color) { s += to_string(o.color); s += ' '; }
  s += to_string(o.shape);
  return s;
}

inline const char* relation_text(Relation r) {
  switch (r) {
    case Relation::kLeftOf: return "left of";
    case Relation::kRightOf: return "right of";
    case Relation::kAbove: return "above";
    case Relation::kBelow: return "below";
  }
  return "";
}

// All grammar-generable expressions that uniquely pick out `target`.
inline std::vector<Candidate> unique_expressions(const std::vector<ShapeObject>& objects,
                                                 const ShapeObject& target) {
  std::vector<Candidate> out;
  auto unique_for = [&](const std::string& text) {
    std::set<int> m = semantic_match(text, objects);
    return m.size() == 1 && *m.begin() == target.id;
  };
  for (bool with_size : {false, true}) {
    for (bool with_color : {false, true}) {
      std::string t = unary_text(target, with_size, with_color);
      if (unique_for(t))
        out.push_back({t, with_color ? ExprForm::kHasColorWord : ExprForm::kAny});
    }
  }
  {
    std::string t = "the " + std::string(to_string(target.shape)) + " with " +
                    to_string(target.color) + " color";
    if (unique_for(t)) out.push_back({t, ExprForm::kWithColor});
  }
  for (const auto& anchor : objects) {
    if (anchor.id == target.id) continue;
    // The anchor must itself be a unique definite reference.
    std::string anchor_text;
    for (bool with_size : {false, true}) {
      for (bool with_color : {false, true}) {
        std::string t = unary_text(anchor, with_size, with_color);
        std::set<int> m = semantic_match(t, objects);
        if (m.size() == 1 && *m.begin() == anchor.id) {
          anchor_text = t;
          break;
        }
      }
      if (!anchor_text.empty()) break;
    }
    if (anchor_text.empty()) continue;
    for (Relation r : {Relation::kLeftOf, Relation::kRightOf, Relation::kAbove,
                       Relation::kBelow}) {
      if (!relation_holds(r, target, anchor)) continue;
      for (bool with_size : {false, true}) {
        for (bool with_color : {false, true}) {
          std::string t = unary_text(target, with_size, with_color) + " " +
                          relation_text(r) + " " + anchor_text;
          if (unique_for(t)) out.push_back({t, ExprForm::kSpatial});
        }
      }
    }
  }
  return out;
}

inline bool satisfies_form(const Candidate& c, ExprForm want) {
  switch (want) {
    case ExprForm::kAny:
      return true;
    case ExprForm::kSpatial:
      return c.form == ExprForm::kSpatial;
    case ExprForm::kWithColor:
      return c.form == ExprForm::kWithColor;
    case ExprForm::kHasColorWord:
      for (const auto& w : split_words(c.text))
        if (is_color_word(w)) return true;
      return false;
  }
  return false;
}

}  // namespace worlddetail

// Deterministic scene generator. Rejection-samples scenes until the chosen
// target admits a uniquely-referring expression of the requested form.
inline SceneSample generate_scene(std::uint64_t seed, const WorldConfig& config,
                                  ExprForm form = ExprForm::kAny) {
  using namespace worlddetail;
  Rng rng(derive_seed(seed, 0x5CE7Eull));
  const int cells = config.grid * config.grid;
  for (int attempt = 0; attempt < config.retry_budget; ++attempt) {
    const int n =
        config.min_objects + rng.uniform_int(config.max_objects - config.min_objects + 1);
    std::vector<int> cell_ids(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) cell_ids[static_cast<std::size_t>(i)] = i;
    for (int i = cells - 1; i > 0; --i)
      std::swap(cell_ids[static_cast<std::size_t>(i)],
                cell_ids[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

    std::vector<ShapeObject> objects;
    for (int i = 0; i < n; ++i) {
      ShapeObject o;
      o.id = i;
      o.shape = static_cast<ObjShape>(rng.uniform_int(3));
      o.color = static_cast<ObjColor>(rng.uniform_int(4));
      o.size = static_cast<ObjSize>(rng.uniform_int(2));
      o.row = cell_ids[static_cast<std::size_t>(i)] / config.grid;
      o.col = cell_ids[static_cast<std::size_t>(i)] % config.grid;
      o.box = box_for_cell(o.row, o.col, o.size, config);
      objects.push_back(o);
    }

    const int target_idx = rng.uniform_int(n);
    std::vector<Candidate> cands =
        unique_expressions(objects, objects[static_cast<std::size_t>(target_idx)]);
    std::vector<Candidate> eligible;
    for (auto& c : cands)
      if (satisfies_form(c, form)) eligible.push_back(c);
    if (eligible.empty()) continue;

    // Bias toward spatial and with-color forms so the false-alarm categories
    // all have plentiful sources.
    std::string expr;
    if (form == ExprForm::kAny) {
      std::vector<Candidate> spatial, withcol, plain;
      for (auto& c : eligible) {
        if (c.form == ExprForm::kSpatial) spatial.push_back(c);
        else if (c.form == ExprForm::kWithColor) withcol.push_back(c);
        else plain.push_back(c);
      }
      double u = rng.uniform();
      std::vector<Candidate>* bucket = &plain;
      if (!spatial.empty() && u < 0.40) bucket = &spatial;
      else if (!withcol.empty() && u < 0.55) bucket = &withcol;
      if (bucket->empty()) bucket = &eligible;
      expr = (*bucket)[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(bucket->size())))].text;
    } else {
      expr = eligible[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(eligible.size())))].text;
    }

    std::set<int> match = semantic_match(expr, objects);
    if (match.size() != 1 || *match.begin() != objects[static_cast<std::size_t>(target_idx)].id)
      continue;  // defensive; unique_expressions already verified

    SceneSample s;
    s.scene_id = seed;
    s.objects = objects;
    s.raster = rasterize(objects, config);
    s.expression = expr;
    s.target_id = objects[static_cast<std::size_t>(target_idx)].id;
    s.gt_box = objects[static_cast<std::size_t>(target_idx)].box;
    s.exists = true;
    s.variant_kind = VariantKind::kRegular;
    return s;
  }
  throw GenerationError("generate_scene: retry budget exhausted");
}

// ---------------------------------------------------------------------------
// False-alarm variants.
// ---------------------------------------------------------------------------

// Rewrites `sample`'s expression (or swaps it for a donor expression) so that
// no object in the scene satisfies it; verified with semantic_match. The
// donor pool is only consulted for kRandomMismatch.
inline SceneSample make_false_alarm(
    const SceneSample& sample, VariantKind kind, Rng& rng,
    const std::vector<const SceneSample*>& donor_pool = {},
    int retry_budget = 100) {
  using namespace worlddetail;
  if (kind == VariantKind::kRegular)
    throw ValidationError("make_false_alarm: kind must not be regular");
  if (!sample.exists)
    throw ValidationError("make_false_alarm: sample must be regular");

  auto finish = [&](const std::string& expr) {
    SceneSample out = sample;
    out.expression = expr;
    out.target_id = -1;
    out.gt_box = PixelBox{};
    out.exists = false;
    out.variant_kind = kind;
    return out;
  };

  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    std::string expr;
    if (kind == VariantKind::kRandomMismatch) {
      std::vector<const SceneSample*> donors;
      for (const auto* d : donor_pool)
        if (d->scene_id != sample.scene_id) donors.push_back(d);
      if (donors.empty())
        throw GenerationError("make_false_alarm: empty donor pool");
      expr = donors[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(donors.size())))]
                 ->expression;
    } else {
      std::vector<std::string> w = split_words(sample.expression);
      if (kind == VariantKind::kNounSwap) {
        std::vector<std::size_t> pos;
        for (std::size_t i = 0; i < w.size(); ++i)
          if (is_shape_word(w[i])) pos.push_back(i);
        if (pos.empty()) throw GenerationError("noun_swap: no shape noun");
        std::size_t p = pos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pos.size())))];
        const char* shapes[] = {"circle", "square", "triangle"};
        std::string repl;
        do {
          repl = shapes[rng.uniform_int(3)];
        } while (repl == w[p]);
        w[p] = repl;
      } else if (kind == VariantKind::kAdjectiveSwap) {
        std::vector<std::size_t> pos;
        for (std::size_t i = 0; i < w.size(); ++i)
          if (is_color_word(w[i])) pos.push_back(i);
        if (pos.empty()) throw GenerationError("adjective_swap: no color word");
        std::size_t p = pos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pos.size())))];
        const char* colors[] = {"red", "green", "blue", "yellow"};
        std::string repl;
        do {
          repl = colors[rng.uniform_int(4)];
        } while (repl == w[p]);
        w[p] = repl;
      } else if (kind == VariantKind::kSpatialSwap) {
        int rel_at = -1;
        Relation old_rel = Relation::kAbove;
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (w[i] == "above") { rel_at = static_cast<int>(i); old_rel = Relation::kAbove; break; }
          if (w[i] == "below") { rel_at = static_cast<int>(i); old_rel = Relation::kBelow; break; }
          if ((w[i] == "left" || w[i] == "right") && i + 1 < w.size() && w[i + 1] == "of") {
            rel_at = static_cast<int>(i);
            old_rel = (w[i] == "left") ? Relation::kLeftOf : Relation::kRightOf;
            break;
          }
        }
        if (rel_at < 0) throw GenerationError("spatial_swap: no relation");
        Relation new_rel;
        do {
          new_rel = static_cast<Relation>(rng.uniform_int(4));
        } while (new_rel == old_rel);
        std::size_t erase_n =
            (old_rel == Relation::kLeftOf || old_rel == Relation::kRightOf) ? 2 : 1;
        w.erase(w.begin() + rel_at, w.begin() + rel_at + static_cast<long>(erase_n));
        std::vector<std::string> ins = split_words(relation_text(new_rel));
        w.insert(w.begin() + rel_at, ins.begin(), ins.end());
      } else {  // kAttributeNegation
        int with_at = -1;
        for (std::size_t i = 0; i < w.size(); ++i)
          if (w[i] == "with") { with_at = static_cast<int>(i); break; }
        if (with_at < 0) throw GenerationError("attribute_negation: no 'with' phrase");
        w[static_cast<std::size_t>(with_at)] = "without";
      }
      expr.clear();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) expr += ' ';
        expr += w[i];
      }
    }
    if (semantic_match(expr, sample.objects).empty()) return finish(expr);
  }
  throw GenerationError(std::string("make_false_alarm: retry budget exhausted for ") +
                        to_string(kind));
}

// ---------------------------------------------------------------------------
// Split building.
// ---------------------------------------------------------------------------

struct SplitSpec {
  int regular = 0;
  std::map<VariantKind, int> fa_counts;

  int total() const {
    int t = regular;
    for (const auto& [k, v] : fa_counts) t += v;
    return t;
  }
};

// Even split of `fa_total` false alarms over the five kinds; the remainder
// goes to random mismatch (the only kind with no structural requirement).
inline std::map<VariantKind, int> spread_fa_kinds(int fa_total) {
  std::map<VariantKind, int> counts;
  const VariantKind kinds[] = {VariantKind::kRandomMismatch, VariantKind::kNounSwap,
                               VariantKind::kAdjectiveSwap, VariantKind::kSpatialSwap,
                               VariantKind::kAttributeNegation};
  int per = fa_total / 5;
  int rem = fa_total - 5 * per;
  for (VariantKind k : kinds) counts[k] = per;
  counts[VariantKind::kRandomMismatch] += rem;
  return counts;
}

namespace worlddetail {

inline ExprForm form_needed(VariantKind kind) {
  switch (kind) {
    case VariantKind::kAdjectiveSwap: return ExprForm::kHasColorWord;
    case VariantKind::kSpatialSwap: return ExprForm::kSpatial;
    case VariantKind::kAttributeNegation: return ExprForm::kWithColor;
    default: return ExprForm::kAny;
  }
}

}  // namespace worlddetail

// Builds one split: `spec.regular` regular scenes followed by the false-alarm
// blocks, each false alarm drawn on a fresh scene (no image reuse within a
// split). Deterministic in (dataset_seed, split_tag, spec, config).
inline std::vector<SceneSample> build_split(std::uint64_t dataset_seed,
                                            std::uint32_t split_tag,
                                            const SplitSpec& spec,
                                            const WorldConfig& config,
                                            std::uint64_t scene_id_base) {
  const std::uint64_t stream = derive_seed(dataset_seed, 0xB111Dull + split_tag);
  std::uint64_t attempt_counter = 0;
  auto next_scene = [&](ExprForm form) {
    // Fresh generation seed per attempt; scene ids are assigned afterwards.
    return generate_scene(derive_seed(stream, ++attempt_counter), config, form);
  };

  std::vector<SceneSample> out;
  for (int i = 0; i < spec.regular; ++i) out.push_back(next_scene(ExprForm::kAny));

  // Random mismatch donors come from the regular block built above.
  Rng fa_rng(derive_seed(stream, 0xFAFAull));
  std::vector<std::pair<VariantKind, int>> blocks(spec.fa_counts.begin(),
                                                  spec.fa_counts.end());
  for (const auto& [kind, count] : blocks) {
    for (int i = 0; i < count; ++i) {
      const int scene_tries = 50;
      bool done = false;
      for (int t = 0; t < scene_tries && !done; ++t) {
        SceneSample src = next_scene(worlddetail::form_needed(kind));
        try {
          if (kind == VariantKind::kRandomMismatch) {
            std::vector<const SceneSample*> donors;
            for (const auto& s : out)
              if (s.exists) donors.push_back(&s);
            if (donors.empty()) {
              // Split with no regular block: donate from a fresh scene.
              SceneSample donor = next_scene(ExprForm::kAny);
              donor.scene_id = src.scene_id + 1;
              std::vector<const SceneSample*> one = {&donor};
              out.push_back(make_false_alarm(src, kind, fa_rng, one));
            } else {
              out.push_back(make_false_alarm(src, kind, fa_rng, donors));
            }
            done = true;
          } else {
            out.push_back(make_false_alarm(src, kind, fa_rng));
            done = true;
          }
        } catch (const GenerationError&) {
          // Scene does not admit this kind; draw another.
        }
      }
      if (!done)
        throw GenerationError(std::string("build_split: cannot build ") +
                              to_string(kind) + " false alarm");
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].scene_id = scene_id_base + i;
  return out;
}

}  // namespace grounder

#endif  // GROUNDER_WORLD_HPP
