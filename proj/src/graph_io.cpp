#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gnnforge/errors.hpp"
#include "gnnforge/graph.hpp"

namespace gnnforge {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <typename F>
void for_each_line(std::string_view text, F&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    fn(line_no, text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

constexpr char kMagic[5] = {'M', 'F', 'E', 'A', 'T'};

}  // namespace

CsrGraph parse_edge_list(std::string_view text, std::size_t num_nodes) {
  std::vector<Edge> edges;
  bool weighted = false;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') return;
    if (toks.size() != 2 && toks.size() != 3)
      throw ParseError(line_no, "expected \"src dst [weight]\", got " + std::to_string(toks.size()) + " fields");
    std::uint64_t src = 0, dst = 0;
    if (!parse_number(toks[0], src) || !parse_number(toks[1], dst))
      throw ParseError(line_no, "node ids must be non-negative integers");
    if (src >= num_nodes || dst >= num_nodes)
      throw RangeError("line " + std::to_string(line_no) + ": node id " + std::to_string(std::max(src, dst)) +
                       " >= num_nodes " + std::to_string(num_nodes));
    float w = 1.0f;
    if (toks.size() == 3) {
      if (!parse_number(toks[2], w)) throw ParseError(line_no, "weight is not a number");
      weighted = true;
    }
    edges.push_back({NodeId(src), NodeId(dst), w});
  });
  return CsrGraph::from_edges(num_nodes, std::move(edges), weighted);
}

CsrGraph load_edge_list(const std::string& path, std::size_t num_nodes) {
  return parse_edge_list(read_file(path), num_nodes);
}

void write_edge_list(const std::string& path, const CsrGraph& g) {
  std::ostringstream out;
  out.precision(9);
  for (const Edge& e : g.edges()) {
    out << e.src << ' ' << e.dst;
    if (g.weighted()) out << ' ' << e.weight;
    out << '\n';
  }
  write_file(path, out.str());
}

DenseMatrix load_features(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 13 || std::memcmp(bytes.data(), kMagic, 5) != 0)
    throw IoError(path + ": missing MFEAT header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t n = get_u32(p + 5), f = get_u32(p + 9);
  const std::size_t expected = 13 + std::size_t(n) * f * 4;
  if (bytes.size() != expected)
    throw IoError(path + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  DenseMatrix x(n, f);
  for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] = std::bit_cast<float>(get_u32(p + 13 + 4 * i));
  return x;
}

void write_features(const std::string& path, const DenseMatrix& x) {
  std::string buf(kMagic, 5);
  buf.reserve(13 + x.size() * 4);
  put_u32(buf, std::uint32_t(x.rows()));
  put_u32(buf, std::uint32_t(x.cols()));
  for (float v : x.values()) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  write_file(path, buf);
}

std::vector<std::uint32_t> load_labels(const std::string& path) {
  std::vector<std::uint32_t> labels;
  for_each_line(read_file(path), [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(line);
    if (toks.empty()) return;
    std::uint32_t v = 0;
    if (toks.size() != 1 || !parse_number(toks[0], v)) throw ParseError(line_no, "expected one class id");
    labels.push_back(v);
  });
  return labels;
}

void write_labels(const std::string& path, std::span<const std::uint32_t> labels) {
  std::string out;
  for (auto l : labels) out += std::to_string(l) + '\n';
  write_file(path, out);
}

DatasetBundle load_dataset(const std::string& dir) {
  DatasetBundle b;
  b.features = FeatureStore(load_features(dir + "/features.mfeat"));
  b.graph = load_edge_list(dir + "/edges.txt", b.features.num_rows());
  b.labels = load_labels(dir + "/labels.txt");
  for (auto l : b.labels) b.num_classes = std::max<std::size_t>(b.num_classes, l + 1);
  b.validate();
  return b;
}

void write_dataset(const std::string& dir, const DatasetBundle& b) {
  write_edge_list(dir + "/edges.txt", b.graph);
  write_features(dir + "/features.mfeat", b.features.dense);
  write_labels(dir + "/labels.txt", b.labels);
}

}  // namespace gnnforge
