#pragma once

// Binary checkpoint: magic "EDDFCKPT", u32 format version, a key=value
// metadata block, then named tensors as little-endian f64. Vocabulary,
// schedule matrices, network shapes, and the length table are all inside.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "editdiff/config.hpp"
#include "editdiff/core_seq.hpp"
#include "editdiff/denoiser.hpp"
#include "editdiff/forward_step.hpp"
#include "editdiff/nn/transformer.hpp"

namespace editdiff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char checkpoint_magic[8] = {'E', 'D', 'D', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_format = 1;

struct Checkpoint {
  Schedule schedule;
  nn::Params<float> params;
  LengthTable lengths;
  KeyValues meta;  // seed, config hash, version, task, and free-form fields
};

namespace detail {

struct Tensor {
  std::uint64_t rows = 0, cols = 0;
  std::vector<double> data;
};

template <typename T>
void put(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw Error(errc::io, "truncated checkpoint");
  return x;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::uint64_t limit = 1ull << 28) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw Error(errc::io, "corrupt checkpoint string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw Error(errc::io, "truncated checkpoint");
  return s;
}

template <typename M>
Tensor to_tensor(const M& m) {
  Tensor t{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()), {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<double>(m(r, c)));
  return t;
}

inline std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].find_first_of("\t\n") != std::string::npos)
      throw Error(errc::invalid_argument, "printable names may not contain tabs or newlines");
    if (i) s += '\t';
    s += names[i];
  }
  return s;
}

inline std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = s.find('\t', start);
    out.push_back(s.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const Vocabulary& v = ck.schedule.vocab;
  const nn::NetConfig& c = ck.params.cfg;
  KeyValues header = ck.meta;
  header["net.vocab_size"] = std::to_string(c.vocab_size);
  header["net.out_classes"] = std::to_string(c.out_classes);
  header["net.count_buckets"] = std::to_string(c.count_buckets);
  header["net.max_len"] = std::to_string(c.max_len);
  header["net.steps"] = std::to_string(c.steps);
  header["net.width"] = std::to_string(c.width);
  header["net.heads"] = std::to_string(c.heads);
  header["net.blocks"] = std::to_string(c.blocks);
  header["net.ffn_mult"] = std::to_string(c.ffn_mult);
  header["schedule.T"] = std::to_string(ck.schedule.T());
  {
    std::ostringstream os;
    os << std::setprecision(17) << ck.schedule.rate;
    header["schedule.rate"] = os.str();
  }
  header["vocab.data_size"] = std::to_string(v.data_size);
  if (header.count("version") == 0) header["version"] = version_string;

  std::vector<std::pair<std::string, detail::Tensor>> tensors;
  Eigen::MatrixXd alphas(ck.schedule.T(), 1);
  for (int t = 1; t <= ck.schedule.T(); ++t) {
    alphas(t - 1, 0) = ck.schedule.at(t).alpha;
    tensors.emplace_back("schedule.Q." + std::to_string(t), detail::to_tensor(ck.schedule.at(t).Q));
  }
  tensors.emplace_back("schedule.alpha", detail::to_tensor(alphas));
  Eigen::MatrixXd len(1, static_cast<Eigen::Index>(ck.lengths.probs.size()));
  for (std::size_t i = 0; i < ck.lengths.probs.size(); ++i) len(0, static_cast<Eigen::Index>(i)) = ck.lengths.probs[i];
  tensors.emplace_back("length_table", detail::to_tensor(len));
  ck.params.visit([&](const std::string& n, const nn::Mat<float>& m) { tensors.emplace_back("net." + n, detail::to_tensor(m)); });

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(errc::io, "cannot write " + path);
  os.write(checkpoint_magic, sizeof checkpoint_magic);
  detail::put<std::uint32_t>(os, checkpoint_format);
  detail::put_string(os, format_key_values(header));
  detail::put_string(os, v.printable.empty() ? std::string() : detail::join_names(v.printable));
  detail::put_string(os, v.separator);
  detail::put<std::uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_string(os, name);
    detail::put<std::uint64_t>(os, t.rows);
    detail::put<std::uint64_t>(os, t.cols);
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw Error(errc::io, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(errc::io, "cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, checkpoint_magic, sizeof magic) != 0)
    throw Error(errc::io, path + " is not a checkpoint");
  const auto format = detail::get<std::uint32_t>(is);
  if (format != checkpoint_format) throw Error(errc::io, "unsupported checkpoint format " + std::to_string(format));
  std::istringstream hs(detail::get_string(is));
  KeyValues header = parse_key_values(hs);
  const std::string names = detail::get_string(is);
  const std::string sep = detail::get_string(is);
  std::map<std::string, detail::Tensor> tensors;
  const auto count = detail::get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    detail::Tensor t;
    const std::string name = detail::get_string(is, 1 << 16);
    t.rows = detail::get<std::uint64_t>(is);
    t.cols = detail::get<std::uint64_t>(is);
    if (t.rows * t.cols > (1ull << 32)) throw Error(errc::io, "corrupt tensor shape for " + name);
    t.data.resize(t.rows * t.cols);
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw Error(errc::io, "truncated tensor " + name);
    tensors[name] = std::move(t);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = header.find(k);
    if (it == header.end()) throw Error(errc::io, "checkpoint lacks " + k);
    return it->second;
  };
  auto tensor = [&](const std::string& n) -> const detail::Tensor& {
    auto it = tensors.find(n);
    if (it == tensors.end()) throw Error(errc::io, "checkpoint lacks tensor " + n);
    return it->second;
  };

  Checkpoint ck;
  const int D = std::stoi(need("vocab.data_size"));
  ck.schedule.vocab = Vocabulary(D, names.empty() ? std::vector<std::string>{} : detail::split_names(names), sep);
  ck.schedule.rate = std::stod(need("schedule.rate"));
  const int T = std::stoi(need("schedule.T"));
  const auto& alpha = tensor("schedule.alpha");
  if (alpha.rows != static_cast<std::uint64_t>(T)) throw Error(errc::io, "schedule alpha has wrong length");
  const int K = ck.schedule.vocab.latent_size();
  for (int t = 1; t <= T; ++t) {
    const auto& q = tensor("schedule.Q." + std::to_string(t));
    if (q.rows != static_cast<std::uint64_t>(K) || q.cols != static_cast<std::uint64_t>(K))
      throw Error(errc::io, "schedule matrix has wrong shape");
    StepParams p{alpha.data[static_cast<std::size_t>(t - 1)], Matrix(K, K)};
    for (int r = 0; r < K; ++r)
      for (int c = 0; c < K; ++c) p.Q(r, c) = q.data[static_cast<std::size_t>(r * K + c)];
    validate_step(p, ck.schedule.vocab);
    ck.schedule.steps.push_back(std::move(p));
  }
  ck.lengths.probs = tensor("length_table").data;

  nn::NetConfig c;
  c.vocab_size = std::stoi(need("net.vocab_size"));
  c.out_classes = std::stoi(need("net.out_classes"));
  c.count_buckets = std::stoi(need("net.count_buckets"));
  c.max_len = std::stoi(need("net.max_len"));
  c.steps = std::stoi(need("net.steps"));
  c.width = std::stoi(need("net.width"));
  c.heads = std::stoi(need("net.heads"));
  c.blocks = std::stoi(need("net.blocks"));
  c.ffn_mult = std::stoi(need("net.ffn_mult"));
  ck.params = nn::Params<float>(c);
  ck.params.visit([&](const std::string& n, nn::Mat<float>& m) {
    const auto& t = tensor("net." + n);
    if (t.rows != static_cast<std::uint64_t>(m.rows()) || t.cols != static_cast<std::uint64_t>(m.cols()))
      throw Error(errc::io, "tensor " + n + " has wrong shape");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col)
        m(r, col) = static_cast<float>(t.data[static_cast<std::size_t>(r * m.cols() + col)]);
  });
  for (auto it = header.begin(); it != header.end();) {
    if (it->first.rfind("net.", 0) == 0 || it->first.rfind("schedule.", 0) == 0 || it->first.rfind("vocab.", 0) == 0)
      it = header.erase(it);
    else
      ++it;
  }
  ck.meta = std::move(header);
  return ck;
}

}  // namespace editdiff
