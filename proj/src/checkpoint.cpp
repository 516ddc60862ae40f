#include "cpoison/checkpoint.hpp"

#include <string>
#include <vector>

#include "cpoison/errors.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

namespace {

constexpr std::string_view kMagic = "cpoison-checkpoint 1";

void append_matrix(std::string& out, const Tensor& m) {
  const std::size_t rows = m.shape()[0];
  const std::size_t cols = m.shape()[1];
  out += "weight " + std::to_string(rows) + " " + std::to_string(cols) + "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += format_double(m.at(r, c));
    }
    out += '\n';
  }
}

void append_vector(std::string& out, const Tensor& v) {
  out += "bias " + std::to_string(v.size()) + "\n";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  out += '\n';
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next non-blank line, split into fields; throws at end of input.
  std::vector<std::string_view> next(std::string_view expecting) {
    while (pos_ < text_.size()) {
      const auto end = text_.find('\n', pos_);
      const auto raw = text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
      pos_ = end == std::string_view::npos ? text_.size() : end + 1;
      ++line_;
      const auto line = trim(raw);
      if (!line.empty()) return split_fields(line);
    }
    throw ParseError("unexpected end of checkpoint, expected " + std::string(expecting), line_);
  }

  std::size_t line() const { return line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

void expect_keyword(const std::vector<std::string_view>& fields, std::string_view keyword, std::size_t n_fields,
                    std::size_t line) {
  if (fields.empty() || fields[0] != keyword || fields.size() != n_fields) {
    throw ParseError("expected '" + std::string(keyword) + "' record", line);
  }
}

Tensor read_matrix(LineReader& reader, std::size_t rows, std::size_t cols) {
  auto header = reader.next("weight");
  expect_keyword(header, "weight", 3, reader.line());
  if (parse_uint(header[1], reader.line()) != rows || parse_uint(header[2], reader.line()) != cols) {
    throw ParseError("weight dimensions disagree with block header", reader.line());
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto fields = reader.next("weight row");
    if (fields.size() != cols) throw ParseError("weight row has " + std::to_string(fields.size()) + " values", reader.line());
    for (auto f : fields) values.push_back(parse_double(f, reader.line()));
  }
  return Tensor::matrix(rows, cols, std::move(values));
}

Tensor read_vector(LineReader& reader, std::size_t n) {
  auto header = reader.next("bias");
  expect_keyword(header, "bias", 2, reader.line());
  if (parse_uint(header[1], reader.line()) != n) throw ParseError("bias length disagrees with block header", reader.line());
  auto fields = reader.next("bias values");
  if (fields.size() != n) throw ParseError("bias row has " + std::to_string(fields.size()) + " values", reader.line());
  std::vector<double> values;
  for (auto f : fields) values.push_back(parse_double(f, reader.line()));
  return Tensor::vector(std::move(values));
}

}  // namespace

std::string save_checkpoint(const Checkpoint& checkpoint) {
  const FeatureExtractor& ex = checkpoint.extractor;
  const ExtractorSpec& spec = ex.spec();
  std::string out(kMagic);
  out += "\nnonlinearity " + std::string(to_string(spec.nonlinearity)) + "\n";
  out += "seed " + std::to_string(spec.seed) + "\n";
  out += "dropout_prob " + format_double(spec.dropout_prob) + "\n";
  out += "blocks " + std::to_string(ex.num_blocks()) + "\n";
  for (std::size_t l = 0; l < ex.num_blocks(); ++l) {
    const BlockDims& d = spec.block_dims[l];
    out += "block " + std::to_string(l) + " in " + std::to_string(d.in_dim) + " out " + std::to_string(d.out_dim) +
           " dropout " + (spec.dropout_sites[l] ? "1" : "0") + "\n";
    append_matrix(out, ex.block(l).weight);
    append_vector(out, ex.block(l).bias);
  }
  if (checkpoint.head) {
    out += "head " + std::to_string(checkpoint.head->n_classes()) + " " +
           std::to_string(checkpoint.head->feature_dim()) + "\n";
    append_matrix(out, checkpoint.head->weight);
    append_vector(out, checkpoint.head->bias);
  }
  out += "end\n";
  return out;
}

Checkpoint load_checkpoint(std::string_view text) {
  LineReader reader(text);
  auto magic = reader.next("header");
  if (magic.size() != 2 || magic[0] != "cpoison-checkpoint" || magic[1] != "1") {
    throw ParseError("not a cpoison checkpoint (version 1)", reader.line());
  }
  ExtractorSpec spec;
  auto nl = reader.next("nonlinearity");
  expect_keyword(nl, "nonlinearity", 2, reader.line());
  spec.nonlinearity = parse_nonlinearity(nl[1]);
  auto seed = reader.next("seed");
  expect_keyword(seed, "seed", 2, reader.line());
  spec.seed = parse_uint(seed[1], reader.line());
  auto prob = reader.next("dropout_prob");
  expect_keyword(prob, "dropout_prob", 2, reader.line());
  spec.dropout_prob = parse_double(prob[1], reader.line());
  auto count = reader.next("blocks");
  expect_keyword(count, "blocks", 2, reader.line());
  const std::size_t n_blocks = parse_uint(count[1], reader.line());

  std::vector<Block> blocks;
  for (std::size_t l = 0; l < n_blocks; ++l) {
    auto header = reader.next("block");
    expect_keyword(header, "block", 8, reader.line());
    if (parse_uint(header[1], reader.line()) != l || header[2] != "in" || header[4] != "out" || header[6] != "dropout") {
      throw ParseError("malformed block header", reader.line());
    }
    const std::size_t in = parse_uint(header[3], reader.line());
    const std::size_t out = parse_uint(header[5], reader.line());
    const std::uint64_t site = parse_uint(header[7], reader.line());
    if (site > 1) throw ParseError("dropout flag must be 0 or 1", reader.line());
    spec.block_dims.push_back({in, out});
    spec.dropout_sites.push_back(site == 1);
    Block block;
    block.weight = read_matrix(reader, out, in);
    block.bias = read_vector(reader, out);
    blocks.push_back(std::move(block));
  }

  std::optional<LinearClassifier> head;
  auto tail = reader.next("end");
  if (!tail.empty() && tail[0] == "head") {
    expect_keyword(tail, "head", 3, reader.line());
    const std::size_t classes = parse_uint(tail[1], reader.line());
    const std::size_t dim = parse_uint(tail[2], reader.line());
    LinearClassifier h;
    h.weight = read_matrix(reader, classes, dim);
    h.bias = read_vector(reader, classes);
    head = std::move(h);
    tail = reader.next("end");
  }
  expect_keyword(tail, "end", 1, reader.line());

  Checkpoint checkpoint{FeatureExtractor(std::move(spec), std::move(blocks)), std::move(head)};
  if (checkpoint.head && checkpoint.head->feature_dim() != checkpoint.extractor.output_dim()) {
    throw ParseError("head width does not match extractor output");
  }
  return checkpoint;
}

void write_checkpoint_file(const std::string& path, const Checkpoint& checkpoint) {
  write_file(path, save_checkpoint(checkpoint));
}

Checkpoint read_checkpoint_file(const std::string& path) { return load_checkpoint(read_file(path)); }

}  // namespace cpoison
