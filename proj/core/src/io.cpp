#include "rwpatch/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace rwpatch::io {

namespace {

static_assert(std::endian::native == std::endian::little, "PFT1 I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(std::string("pft: truncated ") + what);
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return f;
}

// Reads a whitespace/comment-separated header token of a PNM file.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct PnmHeader {
  std::size_t width = 0, height = 0;
};

PnmHeader read_pnm_header(std::istream& is, const char* magic, const std::filesystem::path& path) {
  if (pnm_token(is) != magic) throw FormatError("'" + path.string() + "': expected " + magic + " magic");
  PnmHeader h;
  try {
    h.width = std::stoul(pnm_token(is));
    h.height = std::stoul(pnm_token(is));
    if (std::stoul(pnm_token(is)) != 255) throw FormatError("'" + path.string() + "': maxval must be 255");
  } catch (const std::invalid_argument&) {
    throw FormatError("'" + path.string() + "': malformed header");
  }
  return h;
}

std::uint8_t to_u8(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)); }

}  // namespace

void write_pft(std::ostream& os, const Tensor& t) {
  os.write("PFT1", 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

Tensor read_pft(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("pft: truncated magic");
  if (std::memcmp(magic, "PFT1", 4) != 0) throw FormatError("pft: bad magic");
  const std::uint32_t rank = get_u32(is, "rank");
  if (rank > 8) throw FormatError("pft: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is, "dims");
  std::vector<float> data(shape_numel(shape));
  if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw FormatError("pft: truncated payload");
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_pft(const std::filesystem::path& path, const Tensor& t) {
  std::ostringstream os;
  write_pft(os, t);
  write_file_atomic(path, os.str());
}

Tensor load_pft(const std::filesystem::path& path) {
  auto f = open_in(path);
  return read_pft(f);
}

void save_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("save_ppm: expected [3,H,W]");
  const std::size_t H = image.dim(1), W = image.dim(2);
  std::string bytes = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  bytes.reserve(bytes.size() + 3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(to_u8(image.at(c, y, x))));
  write_file_atomic(path, bytes);
}

Tensor load_ppm(const std::filesystem::path& path) {
  auto f = open_in(path);
  const PnmHeader h = read_pnm_header(f, "P6", path);
  std::vector<unsigned char> raw(3 * h.width * h.height);
  if (!f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("'" + path.string() + "': truncated pixel data");
  }
  Tensor img(Shape{3, h.height, h.width});
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(raw[(y * h.width + x) * 3 + c]) / 255.f;
  return img;
}

void save_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  std::string bytes = "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
  bytes.append(labels.data.begin(), labels.data.end());
  write_file_atomic(path, bytes);
}

LabelMap load_pgm(const std::filesystem::path& path) {
  auto f = open_in(path);
  const PnmHeader h = read_pnm_header(f, "P5", path);
  LabelMap lm(h.height, h.width);
  if (!f.read(reinterpret_cast<char*>(lm.data.data()), static_cast<std::streamsize>(lm.data.size()))) {
    throw FormatError("'" + path.string() + "': truncated pixel data");
  }
  return lm;
}

Tensor quantize_u8(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.vec()) v = static_cast<float>(to_u8(v)) / 255.f;
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
      f.close();
      fs::remove(tmp);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace rwpatch::io
