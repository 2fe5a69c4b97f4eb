#include "rsnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace rsnet {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Fixed-format float, locale-independent, byte-stable.
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// PPM

namespace {

int ppm_token(const std::string& bytes, std::size_t& pos,
              const std::string& path) {
  // Skip whitespace and '#' comments.
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size())
    throw ParseError(path + ": truncated PPM header at byte " +
                     std::to_string(pos));
  int value = 0;
  bool any = false;
  while (pos < bytes.size() &&
         std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1 << 20)
      throw ParseError(path + ": unreasonable PPM header value at byte " +
                       std::to_string(pos));
    ++pos;
    any = true;
  }
  if (!any)
    throw ParseError(path + ": expected integer in PPM header at byte " +
                     std::to_string(pos));
  return value;
}

}  // namespace

Tensor load_image_ppm(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw ParseError(path + ": not a binary PPM (missing P6 magic)");
  std::size_t pos = 2;
  const int w = ppm_token(bytes, pos, path);
  const int h = ppm_token(bytes, pos, path);
  const int maxval = ppm_token(bytes, pos, path);
  if (w <= 0 || h <= 0)
    throw ParseError(path + ": non-positive PPM dimensions");
  if (maxval != 255)
    throw ParseError(path + ": unsupported PPM maxval " +
                     std::to_string(maxval) + " (expected 255)");
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError(path + ": malformed PPM header at byte " +
                     std::to_string(pos));
  ++pos;  // single whitespace before payload
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need)
    throw ParseError(path + ": truncated PPM payload at byte " +
                     std::to_string(bytes.size()) + " (need " +
                     std::to_string(pos + need) + " bytes)");
  Tensor img(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) =
            static_cast<unsigned char>(bytes[pos + (y * w + x) * 3 + c]) /
            255.0f;
  return img;
}

void save_image_ppm(const Tensor& image, const std::string& path) {
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("save_image_ppm: image must be (1,3,H,W)");
  const int h = image.h();
  const int w = image.w();
  std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) +
                      "\n255\n";
  bytes.reserve(bytes.size() + static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        bytes.push_back(static_cast<char>(std::lround(v * 255.0f)));
      }
  write_file(path, bytes);
}

// ---------------------------------------------------------------------------
// Letterbox

std::pair<Tensor, LetterboxAffine> letterbox(const Tensor& image, int target) {
  if (target <= 0) throw std::invalid_argument("letterbox: target must be > 0");
  const int h = image.h();
  const int w = image.w();
  LetterboxAffine affine;
  affine.scale = std::min(static_cast<float>(target) / w,
                          static_cast<float>(target) / h);
  const int new_w = static_cast<int>(std::lround(w * affine.scale));
  const int new_h = static_cast<int>(std::lround(h * affine.scale));
  affine.dx = (target - new_w) / 2.0f;
  affine.dy = (target - new_h) / 2.0f;

  Tensor out(image.n(), image.c(), target, target);
  out.fill(0.5f);
  const int ox = static_cast<int>(affine.dx);
  const int oy = static_cast<int>(affine.dy);
  for (int n = 0; n < image.n(); ++n) {
    for (int c = 0; c < image.c(); ++c) {
      for (int y = 0; y < new_h; ++y) {
        // Bilinear sample at the source position of the pixel center.
        const float sy = (y + 0.5f) / affine.scale - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const float fy = std::clamp(sy - y0, 0.0f, 1.0f);
        for (int x = 0; x < new_w; ++x) {
          const float sx = (x + 0.5f) / affine.scale - 0.5f;
          const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
          const int x1 = std::min(x0 + 1, w - 1);
          const float fx = std::clamp(sx - x0, 0.0f, 1.0f);
          const float top = image.at(n, c, y0, x0) * (1.0f - fx) +
                            image.at(n, c, y0, x1) * fx;
          const float bot = image.at(n, c, y1, x0) * (1.0f - fx) +
                            image.at(n, c, y1, x1) * fx;
          out.at(n, c, oy + y, ox + x) = top * (1.0f - fy) + bot * fy;
        }
      }
    }
  }
  return {std::move(out), affine};
}

// ---------------------------------------------------------------------------
// Labels

std::vector<GroundTruthBox> load_labels(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::vector<GroundTruthBox> boxes;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    GroundTruthBox b;
    if (!(ls >> b.class_id >> b.cx >> b.cy >> b.w >> b.h))
      fail("expected 'class_id cx cy w h'");
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
    if (b.class_id < 0) fail("negative class id");
    if (!(b.cx >= 0.0f && b.cx <= 1.0f) || !(b.cy >= 0.0f && b.cy <= 1.0f))
      fail("box center out of [0,1]");
    if (!(b.w > 0.0f && b.w <= 1.0f) || !(b.h > 0.0f && b.h <= 1.0f))
      fail("box size out of (0,1]");
    boxes.push_back(b);
  }
  return boxes;
}

void save_labels(const std::vector<GroundTruthBox>& boxes,
                 const std::string& path) {
  std::ostringstream out;
  for (const auto& b : boxes)
    out << b.class_id << " " << fmt(b.cx) << " " << fmt(b.cy) << " "
        << fmt(b.w) << " " << fmt(b.h) << "\n";
  write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Synthetic dataset

std::vector<Sample> synth_dataset(int n_images, int size, int classes,
                                  std::uint64_t seed) {
  if (size < 32) throw std::invalid_argument("synth_dataset: size must be >=32");
  if (classes < 1 || n_images < 1)
    throw std::invalid_argument("synth_dataset: bad arguments");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);

  std::vector<Sample> samples;
  samples.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "img_%04d", i);
    s.id = id;
    s.image = Tensor(1, 3, size, size);

    // Textured dark background.
    float base[3];
    for (float& b : base) b = 0.25f + 0.2f * unit(rng);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          s.image.at(0, c, y, x) =
              std::clamp(base[c] + 0.05f * (unit(rng) - 0.5f), 0.0f, 1.0f);

    const int objects = 1 + static_cast<int>(unit(rng) * 3.0f) % 3;
    for (int o = 0; o < objects; ++o) {
      GroundTruthBox box;
      box.class_id = static_cast<int>(unit(rng) * classes) % classes;
      const float bw = (0.15f + 0.25f * unit(rng)) * size;
      const float bh = (0.15f + 0.25f * unit(rng)) * size;
      const float cx = bw / 2 + unit(rng) * (size - bw);
      const float cy = bh / 2 + unit(rng) * (size - bh);
      box.cx = cx / size;
      box.cy = cy / size;
      box.w = bw / size;
      box.h = bh / size;

      float color[3];
      for (float& c : color) c = 0.1f * unit(rng);
      color[box.class_id % 3 == 0 ? 0 : (box.class_id % 3 == 1 ? 1 : 2)] =
          0.85f + 0.15f * unit(rng);

      const int x0 = std::max(0, static_cast<int>(cx - bw / 2));
      const int x1 = std::min(size - 1, static_cast<int>(cx + bw / 2));
      const int y0 = std::max(0, static_cast<int>(cy - bh / 2));
      const int y1 = std::min(size - 1, static_cast<int>(cy + bh / 2));
      const bool is_cross = box.class_id % 2 == 1;
      const int bar_w = std::max(1, (x1 - x0 + 1) / 3);
      const int bar_h = std::max(1, (y1 - y0 + 1) / 3);
      const int mid_x = (x0 + x1) / 2;
      const int mid_y = (y0 + y1) / 2;
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (is_cross) {
            const bool in_vbar = std::abs(x - mid_x) <= bar_w / 2;
            const bool in_hbar = std::abs(y - mid_y) <= bar_h / 2;
            if (!in_vbar && !in_hbar) continue;
          }
          for (int c = 0; c < 3; ++c) s.image.at(0, c, y, x) = color[c];
        }
      }
      s.boxes.push_back(box);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(const std::vector<Sample>& samples, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& s : samples) {
    save_image_ppm(s.image, (fs::path(dir) / (s.id + ".ppm")).string());
    save_labels(s.boxes, (fs::path(dir) / (s.id + ".txt")).string());
  }
}

std::vector<Sample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw ParseError("dataset directory not found: " + dir);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".ppm")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  std::vector<Sample> samples;
  for (const auto& id : ids) {
    Sample s;
    s.id = id;
    s.image = load_image_ppm((fs::path(dir) / (id + ".ppm")).string());
    const auto label_path = fs::path(dir) / (id + ".txt");
    if (fs::exists(label_path)) s.boxes = load_labels(label_path.string());
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ParseError("no .ppm images in dataset dir: " + dir);
  return samples;
}

// ---------------------------------------------------------------------------
// Weights

namespace {

constexpr char kMagic[4] = {'R', 'S', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(const std::string& bytes, std::size_t& pos,
                      const std::string& path) {
  if (bytes.size() - pos < 4)
    throw ParseError(path + ": truncated weights file at byte " +
                     std::to_string(pos));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
         << (8 * i);
  pos += 4;
  return v;
}

float get_f32(const std::string& bytes, std::size_t& pos,
              const std::string& path) {
  const std::uint32_t bits = get_u32(bytes, pos, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_weights(const NetworkSpec& spec, const Parameters& params,
                  const std::string& path) {
  const auto shapes = conv_shapes(spec);
  if (params.convs.size() != shapes.size())
    throw ShapeError("save_weights: params do not match spec");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(params.convs.size()));
  for (const auto& p : params.convs) {
    put_u32(out, static_cast<std::uint32_t>(p.weights.n()));
    put_u32(out, static_cast<std::uint32_t>(p.weights.c()));
    put_u32(out, static_cast<std::uint32_t>(p.weights.h()));
    put_u32(out, static_cast<std::uint32_t>(p.weights.w()));
    for (float v : p.weights.raw()) put_f32(out, v);
    for (float v : p.bias) put_f32(out, v);
  }
  write_file(path, out);
}

Parameters load_weights(const NetworkSpec& spec, const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError(path + ": bad magic, not an RSNW weights file");
  pos = 4;
  const std::uint32_t version = get_u32(bytes, pos, path);
  if (version != kVersion)
    throw ParseError(path + ": unsupported weights version " +
                     std::to_string(version));
  const std::uint32_t layers = get_u32(bytes, pos, path);
  const auto shapes = conv_shapes(spec);
  if (layers != shapes.size())
    throw WeightsMismatch(path + ": weights hold " + std::to_string(layers) +
                     " conv layers but the network spec needs " +
                     std::to_string(shapes.size()));
  Parameters params;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const std::uint32_t f = get_u32(bytes, pos, path);
    const std::uint32_t c = get_u32(bytes, pos, path);
    const std::uint32_t kh = get_u32(bytes, pos, path);
    const std::uint32_t kw = get_u32(bytes, pos, path);
    const auto& s = shapes[l];
    if (f != static_cast<std::uint32_t>(s.filters) ||
        c != static_cast<std::uint32_t>(s.in_channels) ||
        kh != static_cast<std::uint32_t>(s.kernel) ||
        kw != static_cast<std::uint32_t>(s.kernel))
      throw WeightsMismatch(path + ": layer " + std::to_string(l) + " shape (" +
                       std::to_string(f) + "," + std::to_string(c) + "," +
                       std::to_string(kh) + "," + std::to_string(kw) +
                       ") does not match spec (" + std::to_string(s.filters) +
                       "," + std::to_string(s.in_channels) + "," +
                       std::to_string(s.kernel) + "," +
                       std::to_string(s.kernel) + ")");
    ConvParams p;
    p.weights = Tensor(s.filters, s.in_channels, s.kernel, s.kernel);
    p.bias.resize(s.filters);
    p.stride = s.stride;
    p.padding = (s.kernel - 1) / 2;
    for (float& v : p.weights.raw()) v = get_f32(bytes, pos, path);
    for (float& v : p.bias) v = get_f32(bytes, pos, path);
    params.convs.push_back(std::move(p));
  }
  if (pos != bytes.size())
    throw ParseError(path + ": " + std::to_string(bytes.size() - pos) +
                     " trailing bytes after weights payload");
  return params;
}

// ---------------------------------------------------------------------------
// Detections

std::vector<Detection> load_detections(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::vector<Detection> dets;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.image_id >> d.class_id >> d.confidence >> d.box.x0 >>
          d.box.y0 >> d.box.x1 >> d.box.y1))
      fail("expected 'image_id class_id confidence x0 y0 x1 y1'");
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
    if (d.class_id < 0) fail("negative class id");
    if (!(d.confidence >= 0.0f && d.confidence <= 1.0f))
      fail("confidence out of [0,1]");
    if (!(d.box.x0 < d.box.x1) || !(d.box.y0 < d.box.y1))
      fail("degenerate box");
    dets.push_back(std::move(d));
  }
  return dets;
}

void save_detections(const std::vector<Detection>& dets,
                     const std::string& path) {
  std::ostringstream out;
  for (const auto& d : dets)
    out << d.image_id << " " << d.class_id << " " << fmt(d.confidence) << " "
        << fmt(d.box.x0) << " " << fmt(d.box.y0) << " " << fmt(d.box.x1)
        << " " << fmt(d.box.y1) << "\n";
  write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Plots and reports

namespace {

constexpr int kChartW = 640;
constexpr int kChartH = 400;
constexpr int kMargin = 50;

std::string svg_open() {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(kChartW) + "\" height=\"" + std::to_string(kChartH) +
         "\" viewBox=\"0 0 " + std::to_string(kChartW) + " " +
         std::to_string(kChartH) + "\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string svg_axes(const std::string& title) {
  std::ostringstream out;
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kChartH - kMargin
      << "\" x2=\"" << kChartW - kMargin << "\" y2=\"" << kChartH - kMargin
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\""
      << kMargin << "\" y2=\"" << kChartH - kMargin
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kChartW / 2 << "\" y=\"" << kMargin / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  return out.str();
}

std::string svg_line_chart(const std::string& title,
                           const std::vector<std::pair<double, double>>& pts) {
  double min_x = pts.front().first, max_x = pts.front().first;
  double min_y = pts.front().second, max_y = pts.front().second;
  for (const auto& [x, y] : pts) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  if (max_x == min_x) max_x = min_x + 1;
  if (max_y == min_y) max_y = min_y + 1;
  const double plot_w = kChartW - 2 * kMargin;
  const double plot_h = kChartH - 2 * kMargin;
  std::ostringstream out;
  out << svg_open() << svg_axes(title) << "<polyline fill=\"none\" "
      << "stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (const auto& [x, y] : pts) {
    const double px = kMargin + (x - min_x) / (max_x - min_x) * plot_w;
    const double py = kChartH - kMargin - (y - min_y) / (max_y - min_y) * plot_h;
    out << fmt(px) << "," << fmt(py) << " ";
  }
  out << "\"/>\n"
      << "<text x=\"" << kMargin << "\" y=\"" << kChartH - kMargin / 4
      << "\" font-family=\"sans-serif\" font-size=\"12\">min y=" << fmt(min_y)
      << " max y=" << fmt(max_y) << "</text>\n</svg>\n";
  return out.str();
}

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::pair<std::string, int>>& bars) {
  int max_v = 1;
  for (const auto& [_, v] : bars) max_v = std::max(max_v, v);
  const double plot_w = kChartW - 2 * kMargin;
  const double plot_h = kChartH - 2 * kMargin;
  const double slot = plot_w / std::max<std::size_t>(bars.size(), 1);
  std::ostringstream out;
  out << svg_open() << svg_axes(title);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double bh = static_cast<double>(bars[i].second) / max_v * plot_h;
    const double x = kMargin + i * slot + slot * 0.15;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(kChartH - kMargin - bh)
        << "\" width=\"" << fmt(slot * 0.7) << "\" height=\"" << fmt(bh)
        << "\" fill=\"steelblue\"/>\n"
        << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\""
        << kChartH - kMargin + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" << bars[i].first << "</text>\n"
        << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\""
        << fmt(kChartH - kMargin - bh - 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" << bars[i].second << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace

void emit_loss_curve(const std::vector<std::pair<int, double>>& history,
                     const std::string& out_dir) {
  if (history.empty())
    throw std::invalid_argument("emit_loss_curve: empty history");
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "iteration,loss\n";
  std::vector<std::pair<double, double>> pts;
  for (const auto& [it, loss] : history) {
    csv << it << "," << fmt(loss) << "\n";
    pts.push_back({static_cast<double>(it), loss});
  }
  write_file((fs::path(out_dir) / "loss_curve.csv").string(), csv.str());
  write_file((fs::path(out_dir) / "loss_curve.svg").string(),
             svg_line_chart("training loss", pts));
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);

  std::ostringstream ap_csv;
  ap_csv << "class,ap,lamr\n";
  for (const auto& [cls, ap] : report.per_class_ap) {
    const auto it = report.lamr.find(cls);
    ap_csv << cls << "," << fmt(ap) << ","
           << (it != report.lamr.end() ? fmt(it->second) : "") << "\n";
  }
  write_file((fs::path(out_dir) / "per_class_ap.csv").string(), ap_csv.str());

  std::set<int> classes;
  for (const auto& [c, _] : report.gt_counts) classes.insert(c);
  for (const auto& [c, _] : report.det_counts) classes.insert(c);
  std::ostringstream counts_csv;
  counts_csv << "class,gt_count,det_count,tp_count\n";
  std::vector<std::pair<std::string, int>> gt_bars, det_bars;
  for (int c : classes) {
    auto get = [c](const std::map<int, int>& m) {
      const auto it = m.find(c);
      return it != m.end() ? it->second : 0;
    };
    counts_csv << c << "," << get(report.gt_counts) << ","
               << get(report.det_counts) << "," << get(report.tp_counts)
               << "\n";
    gt_bars.push_back({"class " + std::to_string(c), get(report.gt_counts)});
    det_bars.push_back({"class " + std::to_string(c), get(report.det_counts)});
  }
  write_file((fs::path(out_dir) / "counts.csv").string(), counts_csv.str());
  write_file((fs::path(out_dir) / "gt_counts.svg").string(),
             svg_bar_chart("objects per class (ground truth)", gt_bars));
  write_file((fs::path(out_dir) / "det_counts.svg").string(),
             svg_bar_chart("objects per class (detections)", det_bars));

  for (const auto& [cls, pr] : report.pr_curves) {
    std::ostringstream pr_csv;
    pr_csv << "recall,precision\n";
    for (const auto& p : pr)
      pr_csv << fmt(p.recall) << "," << fmt(p.precision) << "\n";
    write_file(
        (fs::path(out_dir) / ("pr_" + std::to_string(cls) + ".csv")).string(),
        pr_csv.str());
  }
}

}  // namespace rsnet
