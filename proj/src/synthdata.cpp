#include "vidstereo/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vidstereo/io.hpp"

namespace vidstereo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Lattice value in [-1, 1] for integer cell (i, j) of a seeded noise field.
double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ull ^
                                                 splitmix64(static_cast<std::uint64_t>(j))));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// C1-continuous value noise; low curvature keeps resampling error within the
// photometric tolerance.
double vnoise(std::uint64_t seed, double u, double v) {
  double fu = std::floor(u), fv = std::floor(v);
  std::int64_t i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
  double tu = smoothstep(u - fu), tv = smoothstep(v - fv);
  double a = lattice(seed, i, j), b = lattice(seed, i + 1, j);
  double c = lattice(seed, i, j + 1), d = lattice(seed, i + 1, j + 1);
  return (a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv;
}

struct LayerTexture {
  std::uint64_t seed = 0;
  double base[3], amp1[3], amp2[3];
  double cell1 = 16.0, cell2 = 7.0;

  double color(int c, double u, double v) const {
    return base[c] + amp1[c] * vnoise(seed ^ (0x10 + c), u / cell1, v / cell1) +
           amp2[c] * vnoise(seed ^ (0x20 + c), u / cell2, v / cell2);
  }
};

struct Layer {
  bool is_background = false;
  double disp = 0.0;
  double vx = 0.0, vy = 0.0;
  double cx0 = 0.0, cy0 = 0.0, rx = 1.0, ry = 1.0;  // ellipse, left view, t = 0
  LayerTexture tex;

  double cx(int t) const { return cx0 + vx * t; }
  double cy(int t) const { return cy0 + vy * t; }

  // Coverage of continuous point (x, y); in the right view the layer appears
  // shifted left by its disparity.
  bool covers(double x, double y, int t, bool right_view) const {
    if (is_background) return true;
    double lx = x + (right_view ? disp : 0.0);
    double du = (lx - cx(t)) / rx;
    double dv = (y - cy(t)) / ry;
    return du * du + dv * dv <= 1.0;
  }

  void rgb(double x, double y, int t, bool right_view, double out[3]) const {
    double lx = x + (right_view ? disp : 0.0);
    double u = is_background ? lx : lx - cx(t);
    double v = is_background ? y : y - cy(t);
    for (int c = 0; c < 3; ++c) out[c] = tex.color(c, u, v);
  }
};

struct SceneModel {
  SceneConfig cfg;
  std::vector<Layer> layers;  // [0] background, sprites in ascending disparity

  // Topmost (nearest) layer covering the point.
  int top(double x, double y, int t, bool right_view) const {
    for (int i = static_cast<int>(layers.size()) - 1; i >= 1; --i)
      if (layers[i].covers(x, y, t, right_view)) return i;
    return 0;
  }
};

LayerTexture make_texture(Rng& rng) {
  LayerTexture t;
  t.seed = rng.bits();
  for (int c = 0; c < 3; ++c) {
    t.base[c] = rng.uniform(0.38, 0.62);
    t.amp1[c] = rng.uniform(0.12, 0.20);
    t.amp2[c] = rng.uniform(0.05, 0.10);
  }
  t.cell1 = rng.uniform(14.0, 20.0);
  t.cell2 = rng.uniform(6.0, 9.0);
  return t;
}

SceneModel build_scene(const SceneConfig& cfg, std::uint64_t seed) {
  SceneModel m;
  m.cfg = cfg;
  Rng rng(splitmix64(seed) ^ splitmix64(cfg.texture_seed + 0x5eed));

  Layer bg;
  bg.is_background = true;
  bg.disp = cfg.d_min + 0.15 * (cfg.d_max - cfg.d_min) * rng.uniform();
  bg.tex = make_texture(rng);
  m.layers.push_back(bg);

  int n = cfg.sprite_count;
  double span = cfg.d_max - bg.disp;
  for (int i = 0; i < n; ++i) {
    Layer s;
    double slot = span / (n + 1);
    s.disp = bg.disp + slot * (i + 1) + slot * 0.3 * (rng.uniform() - 0.5);
    s.vx = cfg.max_motion * (2.0 * rng.uniform() - 1.0);
    s.vy = 0.5 * cfg.max_motion * (2.0 * rng.uniform() - 1.0);
    s.rx = cfg.width * rng.uniform(0.10, 0.22);
    s.ry = cfg.height * rng.uniform(0.10, 0.22);
    s.cx0 = cfg.width * rng.uniform(0.2, 0.8);
    s.cy0 = cfg.height * rng.uniform(0.2, 0.8);
    s.tex = make_texture(rng);
    m.layers.push_back(s);
  }
  return m;
}

// Renders one view with 4x supersampling per axis; also reports, per pixel,
// the single layer id covering all subsamples, or -1 for mixed pixels.
void render_view(const SceneModel& m, int t, bool right_view, Tensor& img, Tensor& pure_id) {
  int w = m.cfg.width, h = m.cfg.height;
  img = Tensor({3, h, w});
  pure_id = Tensor({h, w});
  constexpr int kSS = 4;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0};
      int id0 = -2;
      bool pure = true;
      for (int sy = 0; sy < kSS; ++sy) {
        for (int sx = 0; sx < kSS; ++sx) {
          double px = x + (sx + 0.5) / kSS - 0.5;
          double py = y + (sy + 0.5) / kSS - 0.5;
          int id = m.top(px, py, t, right_view);
          if (id0 == -2)
            id0 = id;
          else if (id != id0)
            pure = false;
          double rgb[3];
          m.layers[id].rgb(px, py, t, right_view, rgb);
          for (int c = 0; c < 3; ++c) acc[c] += rgb[c];
        }
      }
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = acc[c] / (kSS * kSS);
      pure_id.at(y, x) = pure ? static_cast<double>(id0) : -1.0;
    }
  }
}

// True when every integer pixel under the bilinear footprint of (qx, qy) is
// inside the frame and purely covered by layer `id` in `pure`.
bool footprint_ok(const Tensor& pure, double qx, double qy, int id) {
  int h = pure.dim(0), w = pure.dim(1);
  double fx = std::floor(qx), fy = std::floor(qy);
  int x1 = static_cast<int>(fx), y1 = static_cast<int>(fy);
  bool needx2 = qx - fx > 1e-12, needy2 = qy - fy > 1e-12;
  for (int dy = 0; dy <= (needy2 ? 1 : 0); ++dy)
    for (int dx = 0; dx <= (needx2 ? 1 : 0); ++dx) {
      int xx = x1 + dx, yy = y1 + dy;
      if (xx < 0 || xx >= w || yy < 0 || yy >= h) return false;
      if (pure.at(yy, xx) != static_cast<double>(id)) return false;
    }
  return true;
}

}  // namespace

void SceneConfig::validate() const {
  if (d_min < 0) throw std::invalid_argument("SceneConfig: d_min must satisfy d_min >= 0");
  if (d_max < d_min) throw std::invalid_argument("SceneConfig: disparity range must satisfy d_min <= d_max");
  if (d_max >= width / 4.0)
    throw std::invalid_argument("SceneConfig: d_max must satisfy d_max < width/4 = " +
                                std::to_string(width / 4.0));
  if (frames < 2) throw std::invalid_argument("SceneConfig: frames must satisfy T >= 2");
  if (width % 16 != 0 || height % 16 != 0)
    throw std::invalid_argument("SceneConfig: width and height must be divisible by 16");
  if (sprite_count < 0) throw std::invalid_argument("SceneConfig: sprite_count must be >= 0");
  if (max_motion < 0) throw std::invalid_argument("SceneConfig: max_motion must be >= 0");
}

GroundTruthBundle generate_sequence(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  SceneModel scene = build_scene(config, seed);
  int T = config.frames, h = config.height, w = config.width;

  GroundTruthBundle b;
  b.config = config;
  b.seed = seed;
  for (const Layer& l : scene.layers) b.layers.push_back({l.disp, l.vx, l.vy});

  std::vector<Tensor> pure_left(T), pure_right(T);
  std::vector<Tensor> top_left(T);
  for (int t = 0; t < T; ++t) {
    Tensor img, pure;
    render_view(scene, t, false, img, pure);
    b.left.push_back(std::move(img));
    pure_left[t] = std::move(pure);
    render_view(scene, t, true, img, pure);
    b.right.push_back(std::move(img));
    pure_right[t] = std::move(pure);

    Tensor tl({h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) tl.at(y, x) = scene.top(x, y, t, false);
    top_left[t] = std::move(tl);
  }

  for (int t = 0; t < T; ++t) {
    Tensor disp({h, w});
    Tensor occ({h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int id = static_cast<int>(top_left[t].at(y, x));
        const Layer& L = scene.layers[id];
        disp.at(y, x) = L.disp;
        bool ok = pure_left[t].at(y, x) == static_cast<double>(id) &&
                  footprint_ok(pure_right[t], x - L.disp, y, id);
        occ.at(y, x) = ok ? 0.0 : 1.0;
      }
    }
    b.disparity.push_back(std::move(disp));
    b.occ_stereo.push_back(std::move(occ));
  }

  for (int t = 0; t + 1 < T; ++t) {
    Tensor ff({2, h, w}), fb({2, h, w});
    Tensor of({h, w}), ob({h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int id = static_cast<int>(top_left[t].at(y, x));
        const Layer& L = scene.layers[id];
        ff.at(0, y, x) = L.vx;
        ff.at(1, y, x) = L.vy;
        bool ok = pure_left[t].at(y, x) == static_cast<double>(id) &&
                  footprint_ok(pure_left[t + 1], x + L.vx, y + L.vy, id);
        of.at(y, x) = ok ? 0.0 : 1.0;

        int idn = static_cast<int>(top_left[t + 1].at(y, x));
        const Layer& Ln = scene.layers[idn];
        fb.at(0, y, x) = -Ln.vx;
        fb.at(1, y, x) = -Ln.vy;
        bool okb = pure_left[t + 1].at(y, x) == static_cast<double>(idn) &&
                   footprint_ok(pure_left[t], x - Ln.vx, y - Ln.vy, idn);
        ob.at(y, x) = okb ? 0.0 : 1.0;
      }
    }
    b.flow_fwd.push_back(std::move(ff));
    b.flow_bwd.push_back(std::move(fb));
    b.occ_temporal_fwd.push_back(std::move(of));
    b.occ_temporal_bwd.push_back(std::move(ob));
  }
  return b;
}

DatasetSplit split_dataset(int n_sequences, std::uint64_t seed, const SceneConfig& base) {
  if (n_sequences < 2) throw std::invalid_argument("split_dataset: need at least 2 sequences");
  Rng rng(splitmix64(seed ^ 0xda7a5eedull));
  std::vector<DatasetItem> items;
  for (int i = 0; i < n_sequences; ++i) {
    DatasetItem it;
    it.config = base;
    it.config.sprite_count = std::max(1, base.sprite_count + rng.uniform_int(-1, 1));
    it.config.max_motion = base.max_motion * rng.uniform(0.6, 1.3);
    it.config.texture_seed = rng.bits();
    it.seed = splitmix64(seed + 0x1000 + static_cast<std::uint64_t>(i));
    items.push_back(it);
  }
  // deterministic shuffle
  for (int i = n_sequences - 1; i > 0; --i) {
    int j = rng.uniform_int(0, i);
    std::swap(items[i], items[j]);
  }
  int n_eval = std::max(1, n_sequences / 5);  // 80/20
  DatasetSplit split;
  for (int i = 0; i < n_sequences; ++i)
    (i < n_sequences - n_eval ? split.train : split.eval).push_back(items[i]);
  return split;
}

namespace {

namespace fs = std::filesystem;

std::string frame_name(const char* stem, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, t, ext);
  return buf;
}

}  // namespace

void save_bundle(const std::string& dir, const GroundTruthBundle& b) {
  fs::create_directories(dir);
  for (const char* sub : {"left", "right", "disp", "flow_fwd", "flow_bwd", "occ_stereo", "occ_temp_fwd",
                          "occ_temp_bwd"})
    fs::create_directories(fs::path(dir) / sub);
  int T = b.frames();
  for (int t = 0; t < T; ++t) {
    write_png_rgb8((fs::path(dir) / "left" / frame_name("frame", t, "png")).string(), b.left[t]);
    write_png_rgb8((fs::path(dir) / "right" / frame_name("frame", t, "png")).string(), b.right[t]);
    write_pfm((fs::path(dir) / "disp" / frame_name("frame", t, "pfm")).string(), b.disparity[t]);
    write_png_mask((fs::path(dir) / "occ_stereo" / frame_name("frame", t, "png")).string(), b.occ_stereo[t]);
  }
  for (int t = 0; t + 1 < T; ++t) {
    write_flo((fs::path(dir) / "flow_fwd" / frame_name("frame", t, "flo")).string(), b.flow_fwd[t]);
    write_flo((fs::path(dir) / "flow_bwd" / frame_name("frame", t, "flo")).string(), b.flow_bwd[t]);
    write_png_mask((fs::path(dir) / "occ_temp_fwd" / frame_name("frame", t, "png")).string(),
                   b.occ_temporal_fwd[t]);
    write_png_mask((fs::path(dir) / "occ_temp_bwd" / frame_name("frame", t, "png")).string(),
                   b.occ_temporal_bwd[t]);
  }
  nlohmann::json j;
  j["format"] = "vidstereo-bundle";
  j["version"] = 1;
  j["seed"] = b.seed;
  j["config"] = {{"width", b.config.width},
                 {"height", b.config.height},
                 {"frames", b.config.frames},
                 {"sprite_count", b.config.sprite_count},
                 {"d_min", b.config.d_min},
                 {"d_max", b.config.d_max},
                 {"max_motion", b.config.max_motion},
                 {"texture_seed", b.config.texture_seed},
                 {"baseline_focal_product", b.config.baseline_focal_product}};
  for (const LayerInfo& l : b.layers)
    j["layers"].push_back({{"disparity", l.disparity}, {"vx", l.vx}, {"vy", l.vy}});
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << j.dump(2) << "\n";
}

GroundTruthBundle load_bundle(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError(dir + ": missing manifest.json");
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "vidstereo-bundle") throw IoError(dir + ": not a bundle manifest");
  GroundTruthBundle b;
  b.seed = j["seed"].get<std::uint64_t>();
  const auto& c = j["config"];
  b.config.width = c["width"].get<int>();
  b.config.height = c["height"].get<int>();
  b.config.frames = c["frames"].get<int>();
  b.config.sprite_count = c["sprite_count"].get<int>();
  b.config.d_min = c["d_min"].get<double>();
  b.config.d_max = c["d_max"].get<double>();
  b.config.max_motion = c["max_motion"].get<double>();
  b.config.texture_seed = c["texture_seed"].get<std::uint64_t>();
  b.config.baseline_focal_product = c["baseline_focal_product"].get<double>();
  if (j.contains("layers"))
    for (const auto& l : j["layers"])
      b.layers.push_back({l["disparity"].get<double>(), l["vx"].get<double>(), l["vy"].get<double>()});
  int T = b.config.frames;
  for (int t = 0; t < T; ++t) {
    b.left.push_back(read_png_rgb8((fs::path(dir) / "left" / frame_name("frame", t, "png")).string()));
    b.right.push_back(read_png_rgb8((fs::path(dir) / "right" / frame_name("frame", t, "png")).string()));
    b.disparity.push_back(read_pfm((fs::path(dir) / "disp" / frame_name("frame", t, "pfm")).string()));
    b.occ_stereo.push_back(
        read_png_mask((fs::path(dir) / "occ_stereo" / frame_name("frame", t, "png")).string()));
  }
  for (int t = 0; t + 1 < T; ++t) {
    b.flow_fwd.push_back(read_flo((fs::path(dir) / "flow_fwd" / frame_name("frame", t, "flo")).string()));
    b.flow_bwd.push_back(read_flo((fs::path(dir) / "flow_bwd" / frame_name("frame", t, "flo")).string()));
    b.occ_temporal_fwd.push_back(
        read_png_mask((fs::path(dir) / "occ_temp_fwd" / frame_name("frame", t, "png")).string()));
    b.occ_temporal_bwd.push_back(
        read_png_mask((fs::path(dir) / "occ_temp_bwd" / frame_name("frame", t, "png")).string()));
  }
  return b;
}

}  // namespace vidstereo
