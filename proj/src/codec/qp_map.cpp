#include "vidctl/codec/qp_map.hpp"

#include <fstream>
#include <sstream>

#include "vidctl/util/errors.hpp"

namespace vidctl::codec {

using util::ContractError;

QpMap QpMap::uniform(int64_t t, int64_t mb_h, int64_t mb_w, int qp) {
  QpMap m;
  m.values = core::Tensor<int>::full({t, mb_h, mb_w}, qp);
  m.validate();
  return m;
}

void QpMap::validate(int64_t clip_h, int64_t clip_w) const {
  if (!values.defined() || values.ndim() != 3)
    throw ContractError("QpMap: values must be [T, H/16, W/16]");
  for (int64_t i = 0; i < values.numel(); ++i)
    if (values[i] < kQpMin || values[i] > kQpMax)
      throw ContractError("QpMap: entry " + std::to_string(values[i]) + " outside [0, 51]");
  if (clip_h >= 0 && (mb_h() != clip_h / kMacroblock || mb_w() != clip_w / kMacroblock))
    throw ContractError("QpMap: spatial dims do not match clip dims / 16");
}

std::string qp_sidecar_serialize(const QpMap& map) {
  std::ostringstream out;
  for (int64_t i = 0; i < map.values.numel(); ++i) out << map.values[i] << "\n";
  return out.str();
}

QpMap qp_sidecar_parse(const std::string& text, int64_t t, int64_t mb_h, int64_t mb_w) {
  QpMap m;
  m.values = core::Tensor<int>({t, mb_h, mb_w});
  std::istringstream in(text);
  for (int64_t i = 0; i < m.values.numel(); ++i) {
    long long v;
    if (!(in >> v))
      throw ContractError("qp sidecar: expected " + std::to_string(m.values.numel()) +
                          " integers, got " + std::to_string(i));
    m.values[i] = static_cast<int>(v);
  }
  long long extra;
  if (in >> extra) throw ContractError("qp sidecar: trailing data");
  m.validate();
  return m;
}

void qp_sidecar_write(const std::string& path, const QpMap& map) {
  std::ofstream f(path);
  if (!f) throw util::IoError("cannot write qp sidecar: " + path);
  f << qp_sidecar_serialize(map);
}

QpMap qp_sidecar_read(const std::string& path, int64_t t, int64_t mb_h, int64_t mb_w) {
  std::ifstream f(path);
  if (!f) throw util::IoError("cannot read qp sidecar: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return qp_sidecar_parse(ss.str(), t, mb_h, mb_w);
}

}  // namespace vidctl::codec
