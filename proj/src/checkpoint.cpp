#include "optideq/checkpoint.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "optideq/errors.hpp"
#include "optideq/io.hpp"
#include "text_util.hpp"

namespace optideq {

namespace {

constexpr std::string_view kMagic = "OPTIDEQ v1";

void put_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ' ' << text::format17(m(i, j));
  out << '\n';
}

void put_tensor(std::ostream& out, const std::string& name, const Vector& v) {
  put_tensor(out, name, Matrix(v));
}

struct Parsed {
  std::map<std::string, std::string> header;
  std::map<std::string, Matrix> tensors;

  const std::string& get(const std::string& key) const {
    const auto it = header.find(key);
    if (it == header.end()) throw DataError("checkpoint lacks entry '" + key + "'");
    return it->second;
  }
  double num(const std::string& key) const {
    const auto v = text::parse_double(get(key));
    if (!v) throw DataError("checkpoint entry '" + key + "' is not a number");
    return *v;
  }
  long integer(const std::string& key) const {
    const auto v = text::parse_int(get(key));
    if (!v) throw DataError("checkpoint entry '" + key + "' is not an integer");
    return static_cast<long>(*v);
  }
  Matrix tensor(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor '" + name + "'");
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
    }
    return it->second;
  }
  Vector vec(const std::string& name, Eigen::Index n) const { return tensor(name, n, 1); }
};

Parsed parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw DataError("not an OPTIDEQ v1 checkpoint");
  Parsed p;
  long remaining = -1;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto tok = text::split_ws(line);
    if (remaining < 0) {
      if (tok.size() != 2) throw DataError("checkpoint header line is not 'key value': " + line);
      if (tok[0] == "tensors") {
        remaining = text::parse_int(tok[1]).value_or(-1);
        if (remaining < 0) throw DataError("checkpoint: bad tensor count");
      } else {
        p.header[std::string(tok[0])] = std::string(tok[1]);
      }
      continue;
    }
    if (tok.size() < 3) throw DataError("checkpoint tensor line too short");
    const auto rows = text::parse_int(tok[1]), cols = text::parse_int(tok[2]);
    if (!rows || !cols || *rows < 0 || *cols < 0 ||
        static_cast<std::size_t>(*rows * *cols) + 3 != tok.size()) {
      throw DataError("checkpoint tensor '" + std::string(tok[0]) + "' has a bad shape or value count");
    }
    Matrix m(*rows, *cols);
    std::size_t k = 3;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const auto v = text::parse_double(tok[k++]);
        if (!v) throw DataError("checkpoint tensor '" + std::string(tok[0]) + "' has a non-numeric value");
        m(i, j) = *v;
      }
    }
    p.tensors[std::string(tok[0])] = std::move(m);
    --remaining;
  }
  if (remaining != 0) throw DataError("checkpoint: tensor count does not match the tensor lines");
  return p;
}

void write_deq(std::ostream& out, const EnsembleModel& m) {
  const auto& c = m.config;
  out << "kind deq\n"
      << "d_in " << c.d_in << "\nd_hidden " << c.d_hidden << "\nn_blocks " << c.n_blocks << '\n'
      << "alpha " << text::format17(c.alpha) << "\nbeta " << text::format17(c.beta) << '\n'
      << "tol " << text::format17(c.tol) << "\nmax_iters " << c.max_iters << '\n'
      << "cell.kind " << cell_kind_name(c.cell.kind) << '\n'
      << "cell.quant_bits " << c.cell.quant_bits << "\ncell.rng_seed " << c.cell.rng_seed << '\n';
  for (int s = 0; s < kStageCount; ++s) {
    const auto name = std::string(stage_name(static_cast<Stage>(s)));
    out << "cell." << name << ".magnitude " << text::format17(c.cell.stages[s].magnitude) << '\n';
    out << "cell." << name << ".shape " << text::format17(c.cell.stages[s].shape) << '\n';
  }
  out << "tensors " << 4 * c.n_blocks + 2 + (m.calib.empty() ? 0 : 1) << '\n';
  for (int k = 0; k < c.n_blocks; ++k) {
    const std::string b = "block" + std::to_string(k) + ".";
    put_tensor(out, b + "W_ip", m.blocks[k].w_ip);
    put_tensor(out, b + "b_ip", m.blocks[k].b_ip);
    put_tensor(out, b + "W", m.blocks[k].w);
    put_tensor(out, b + "b", m.blocks[k].b);
  }
  put_tensor(out, "W_op", m.w_op);
  put_tensor(out, "b_op", m.b_op);
  if (!m.calib.empty()) {
    put_tensor(out, "calib", Vector(Eigen::Map<const Vector>(m.calib.data(), static_cast<Eigen::Index>(m.calib.size()))));
  }
}

EnsembleModel read_deq(const Parsed& p) {
  ModelConfig c;
  c.d_in = static_cast<int>(p.integer("d_in"));
  c.d_hidden = static_cast<int>(p.integer("d_hidden"));
  c.n_blocks = static_cast<int>(p.integer("n_blocks"));
  c.alpha = p.num("alpha");
  c.beta = p.num("beta");
  c.tol = p.num("tol");
  c.max_iters = static_cast<int>(p.integer("max_iters"));
  c.cell.kind = cell_kind_from_name(p.get("cell.kind"));
  c.cell.quant_bits = static_cast<int>(p.integer("cell.quant_bits"));
  const std::string& seed = p.get("cell.rng_seed");
  const auto [end, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), c.cell.rng_seed);
  if (ec != std::errc() || end != seed.data() + seed.size()) throw DataError("checkpoint: bad cell.rng_seed");
  for (int s = 0; s < kStageCount; ++s) {
    const auto name = "cell." + std::string(stage_name(static_cast<Stage>(s)));
    c.cell.stages[s].magnitude = p.num(name + ".magnitude");
    c.cell.stages[s].shape = p.num(name + ".shape");
  }
  EnsembleModel m = EnsembleModel::zeros(c);
  const int h = c.d_hidden;
  for (int k = 0; k < c.n_blocks; ++k) {
    const std::string b = "block" + std::to_string(k) + ".";
    m.blocks[k].w_ip = p.tensor(b + "W_ip", h, c.d_in);
    m.blocks[k].b_ip = p.vec(b + "b_ip", h);
    m.blocks[k].w = p.tensor(b + "W", h, h);
    m.blocks[k].b = p.vec(b + "b", h);
  }
  m.w_op = p.tensor("W_op", 2, c.n_blocks * h);
  m.b_op = p.vec("b_op", 2);
  if (c.cell.kind == CellKind::aoc) {
    const Vector g = p.vec("calib", kCalibrationGains);
    m.calib.assign(g.data(), g.data() + g.size());
  }
  m.validate();
  return m;
}

}  // namespace

std::string model_kind(const AnyModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EnsembleModel>) return "deq";
        else if constexpr (std::is_same_v<T, MlpParams>) return "mlp";
        else return "logreg";
      },
      model);
}

std::string save_checkpoint(const AnyModel& model) {
  std::ostringstream out;
  out << kMagic << '\n';
  if (const auto* deq = std::get_if<EnsembleModel>(&model)) {
    write_deq(out, *deq);
  } else if (const auto* mlp = std::get_if<MlpParams>(&model)) {
    out << "kind mlp\nd_in " << mlp->d_in() << "\nhidden " << mlp->hidden() << "\ndefault_lr "
        << text::format17(mlp->default_lr) << "\ntensors 6\n";
    put_tensor(out, "W1", mlp->w1);
    put_tensor(out, "b1", mlp->b1);
    put_tensor(out, "W2", mlp->w2);
    put_tensor(out, "b2", mlp->b2);
    put_tensor(out, "W3", mlp->w3);
    put_tensor(out, "b3", mlp->b3);
  } else {
    const auto& lr = std::get<LogRegParams>(model);
    out << "kind logreg\nd_in " << lr.d_in() << "\nl2 " << text::format17(lr.l2) << "\ntensors 2\n";
    put_tensor(out, "W", lr.w);
    put_tensor(out, "b", lr.b);
  }
  return out.str();
}

AnyModel load_checkpoint(std::string_view text) {
  const Parsed p = parse(text);
  const std::string& kind = p.get("kind");
  if (kind == "deq") return read_deq(p);
  if (kind == "mlp") {
    const int d = static_cast<int>(p.integer("d_in"));
    const int h = static_cast<int>(p.integer("hidden"));
    MlpParams m = MlpParams::zeros(d, h);
    m.default_lr = p.num("default_lr");
    m.w1 = p.tensor("W1", h, d);
    m.b1 = p.vec("b1", h);
    m.w2 = p.tensor("W2", h, h);
    m.b2 = p.vec("b2", h);
    m.w3 = p.tensor("W3", 2, h);
    m.b3 = p.vec("b3", 2);
    return m;
  }
  if (kind == "logreg") {
    const int d = static_cast<int>(p.integer("d_in"));
    LogRegParams m = LogRegParams::zeros(d);
    m.l2 = p.num("l2");
    m.w = p.tensor("W", 2, d);
    m.b = p.vec("b", 2);
    return m;
  }
  throw DataError("checkpoint has unknown model kind '" + kind + "'");
}

void save_checkpoint_file(const AnyModel& model, const std::string& path) {
  write_file_atomic(path, save_checkpoint(model));
}

AnyModel load_checkpoint_file(const std::string& path) { return load_checkpoint(read_file(path)); }

}  // namespace optideq
