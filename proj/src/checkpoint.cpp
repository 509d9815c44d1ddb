#include "gatepro/checkpoint.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace gatepro {

namespace {

constexpr char kMagic[] = "GATEPRO-CKPT-v1";

void write_doubles(std::ofstream& out, const std::vector<double>& xs) {
  out.write(reinterpret_cast<const char*>(xs.data()),
            static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& xs,
                  const std::string& path) {
  in.read(reinterpret_cast<char*>(xs.data()),
          static_cast<std::streamsize>(xs.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != xs.size() * sizeof(double)) {
    throw IoError("checkpoint truncated: " + path);
  }
}

void write_params(std::ofstream& out, const MoEStackParams& p) {
  for (const MoELayerParams& lp : p.layers) {
    write_doubles(out, lp.gating.w().data());
    for (const ExpertParams& e : lp.experts) {
      write_doubles(out, e.w1.data());
      write_doubles(out, e.b1.data());
      write_doubles(out, e.w2.data());
      write_doubles(out, e.b2.data());
    }
  }
  write_doubles(out, p.readout.data());
}

void write_grads(std::ofstream& out, const Gradients& g) {
  for (const LayerGrads& lg : g.layers) {
    write_doubles(out, lg.gating.data());
    for (const ExpertGrads& e : lg.experts) {
      write_doubles(out, e.w1.data());
      write_doubles(out, e.b1.data());
      write_doubles(out, e.w2.data());
      write_doubles(out, e.b2.data());
    }
  }
  write_doubles(out, g.readout.data());
}

void read_grads(std::ifstream& in, Gradients& g, const std::string& path) {
  for (LayerGrads& lg : g.layers) {
    read_doubles(in, lg.gating.data(), path);
    for (ExpertGrads& e : lg.experts) {
      read_doubles(in, e.w1.data(), path);
      read_doubles(in, e.b1.data(), path);
      read_doubles(in, e.w2.data(), path);
      read_doubles(in, e.b2.data(), path);
    }
  }
  read_doubles(in, g.readout.data(), path);
}

long parse_header_long(const std::string& line, const std::string& key,
                       const std::string& path) {
  const std::string prefix = key + " = ";
  if (line.rfind(prefix, 0) != 0) {
    throw IoError("corrupt checkpoint header (" + key + "): " + path);
  }
  return std::stol(line.substr(prefix.size()));
}

std::uint64_t parse_header_u64(const std::string& line, const std::string& key,
                               const std::string& path) {
  const std::string prefix = key + " = ";
  if (line.rfind(prefix, 0) != 0) {
    throw IoError("corrupt checkpoint header (" + key + "): " + path);
  }
  return std::stoull(line.substr(prefix.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write checkpoint: " + path.string());
  }
  const std::string config_text = config_to_text(ckpt.config);
  out << kMagic << "\n";
  out << "step = " << ckpt.step << "\n";
  out << "rng = " << ckpt.rng_state << "\n";
  out << "adam_t = " << ckpt.adam.t << "\n";
  out << "config_bytes = " << config_text.size() << "\n";
  out << config_text;
  out << "binary\n";
  write_params(out, ckpt.params);
  write_grads(out, ckpt.adam.m);
  write_grads(out, ckpt.adam.v);
  if (!out) {
    throw IoError("failed writing checkpoint: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read checkpoint: " + path.string());
  }
  const std::string p = path.string();

  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw IoError("not a GATEPRO-CKPT-v1 file: " + p);
  }

  Checkpoint ckpt;
  if (!std::getline(in, line)) throw IoError("corrupt checkpoint: " + p);
  ckpt.step = parse_header_long(line, "step", p);
  if (!std::getline(in, line)) throw IoError("corrupt checkpoint: " + p);
  ckpt.rng_state = parse_header_u64(line, "rng", p);
  if (!std::getline(in, line)) throw IoError("corrupt checkpoint: " + p);
  const long adam_t = parse_header_long(line, "adam_t", p);
  if (!std::getline(in, line)) throw IoError("corrupt checkpoint: " + p);
  const long config_bytes = parse_header_long(line, "config_bytes", p);
  if (config_bytes < 0) throw IoError("corrupt checkpoint: " + p);

  std::string config_text(static_cast<std::size_t>(config_bytes), '\0');
  in.read(config_text.data(), config_bytes);
  if (in.gcount() != config_bytes) throw IoError("corrupt checkpoint: " + p);
  try {
    ckpt.config = parse_config_text(config_text);
  } catch (const ConfigError& e) {
    throw IoError("corrupt checkpoint config (" + std::string(e.what()) +
                  "): " + p);
  }

  if (!std::getline(in, line) || line != "binary") {
    throw IoError("corrupt checkpoint: " + p);
  }

  try {
    const RunConfig& cfg = ckpt.config;
    MoEStackParams params;
    params.layers.reserve(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
      std::vector<double> gw(static_cast<std::size_t>(cfg.n_experts) * cfg.dim);
      read_doubles(in, gw, p);
      std::vector<ExpertParams> experts;
      experts.reserve(cfg.n_experts);
      for (int e = 0; e < cfg.n_experts; ++e) {
        std::vector<double> w1(static_cast<std::size_t>(cfg.hidden) * cfg.dim);
        std::vector<double> b1(cfg.hidden);
        std::vector<double> w2(static_cast<std::size_t>(cfg.dim) * cfg.hidden);
        std::vector<double> b2(cfg.dim);
        read_doubles(in, w1, p);
        read_doubles(in, b1, p);
        read_doubles(in, w2, p);
        read_doubles(in, b2, p);
        experts.push_back(ExpertParams{Mat(cfg.hidden, cfg.dim, std::move(w1)),
                                       Vec(std::move(b1)),
                                       Mat(cfg.dim, cfg.hidden, std::move(w2)),
                                       Vec(std::move(b2))});
      }
      params.layers.push_back(MoELayerParams{
          GatingWeights(Mat(cfg.n_experts, cfg.dim, std::move(gw))),
          std::move(experts)});
    }
    std::vector<double> ro(static_cast<std::size_t>(cfg.task.n_classes) *
                           cfg.dim);
    read_doubles(in, ro, p);
    params.readout = Mat(cfg.task.n_classes, cfg.dim, std::move(ro));

    ckpt.params = std::move(params);
    ckpt.adam = make_adam_state(ckpt.params);
    ckpt.adam.t = adam_t;
    read_grads(in, ckpt.adam.m, p);
    read_grads(in, ckpt.adam.v, p);
  } catch (const ContractViolation& e) {
    throw IoError("corrupt checkpoint tensors (" + std::string(e.what()) +
                  "): " + p);
  }

  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw IoError("trailing bytes in checkpoint: " + p);
  }
  return ckpt;
}

}  // namespace gatepro
