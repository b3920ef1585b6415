#include "adaplan/nn/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "../binary_io.hpp"
#include "adaplan/errors.hpp"

namespace adaplan::detail {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open '" + path + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FileError("write to '" + path + "' failed");
}

}  // namespace adaplan::detail

namespace adaplan::nn {

using detail::ByteReader;
using detail::ByteWriter;

void write_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                      std::span<const MlpParams> networks) {
  nlohmann::json nets = nlohmann::json::array();
  for (const MlpParams& p : networks) {
    nets.push_back({{"layer_sizes", p.layer_sizes}, {"activation", to_string(p.activation)}});
  }
  header["networks"] = nets;
  const std::string text = header.dump();

  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  for (const MlpParams& p : networks) {
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      const Eigen::MatrixXd& m = p.weights[l];
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
      }
      for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) w.f32(static_cast<float>(p.biases[l][i]));
    }
  }
  detail::write_file(path.string(), w.buffer());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  ByteReader r(detail::read_file(path.string()));
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not an ADPL checkpoint", 0);
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::size_t header_at = r.offset();
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(r.str(header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what(), header_at);
  }
  if (!ck.header.contains("networks") || !ck.header["networks"].is_array()) {
    throw FormatError("checkpoint header lacks a networks array", header_at);
  }
  for (const auto& net : ck.header["networks"]) {
    MlpParams p;
    try {
      p.layer_sizes = net.at("layer_sizes").get<std::vector<int>>();
      p.activation = activation_from_string(net.at("activation").get<std::string>());
    } catch (const std::exception& e) {
      throw FormatError(std::string("bad network description: ") + e.what(), header_at);
    }
    if (p.layer_sizes.size() < 2) throw FormatError("network with fewer than two layers", header_at);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
      const int in = p.layer_sizes[l];
      const int out = p.layer_sizes[l + 1];
      if (in < 1 || out < 1) throw FormatError("non-positive layer size", header_at);
      Eigen::MatrixXd w(out, in);
      for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) w(i, j) = r.f32("weights");
      }
      Eigen::VectorXd b(out);
      for (int i = 0; i < out; ++i) b[i] = r.f32("bias");
      p.weights.push_back(std::move(w));
      p.biases.push_back(std::move(b));
    }
    ck.networks.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload", r.offset());
  return ck;
}

MlpParams quantize_f32(const MlpParams& params) {
  MlpParams q = params;
  auto round = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (std::size_t l = 0; l < q.num_layers(); ++l) {
    q.weights[l] = q.weights[l].unaryExpr(round);
    q.biases[l] = q.biases[l].unaryExpr(round);
  }
  return q;
}

}  // namespace adaplan::nn
