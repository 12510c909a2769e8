#include "ttc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ttc/common.hpp"

namespace ttc {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'K', '1'};

struct TensorRef {
  std::string name;
  ad::Shape shape;
  std::size_t offset = 0;  // doubles into the payload
};

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& config_digest,
                     const std::string& path) {
  std::ostringstream header;
  header << "format=1\n";
  header << "config=" << config_digest << '\n';
  header << "step=" << store.step() << '\n';

  std::size_t offset = 0;
  std::vector<const std::vector<double>*> payloads;
  for (const std::string& name : store.names()) {
    const ParamStore::Entry& e = store.entry(name);
    for (const auto& [suffix, tensor] :
         {std::pair<const char*, const ad::Tensor*>{"", &e.value},
          std::pair<const char*, const ad::Tensor*>{".adam_m", &e.m},
          std::pair<const char*, const ad::Tensor*>{".adam_v", &e.v}}) {
      header << "tensor=" << name << suffix << ' ' << tensor->rank();
      for (const int d : tensor->shape) header << ' ' << d;
      header << ' ' << offset << '\n';
      offset += tensor->values.size();
      payloads.push_back(&tensor->values);
    }
  }
  header << "end\n";

  std::ofstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "save_checkpoint: cannot open " << path);
  f.write(kMagic, 4);
  const std::string h = header.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const std::vector<double>* p : payloads) write_doubles(f, *p);
  TTC_REQUIRE_IO(f.good(), "save_checkpoint: write failed for " << path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "load_checkpoint: cannot open " << path);
  char magic[4];
  f.read(magic, 4);
  TTC_REQUIRE_IO(f.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
                 "load_checkpoint: " << path << " has bad magic (version mismatch?)");

  LoadedCheckpoint out;
  std::vector<TensorRef> refs;
  std::uint64_t step = 0;
  std::string line;
  bool saw_end = false;
  while (std::getline(f, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const std::size_t eq = line.find('=');
    TTC_REQUIRE_IO(eq != std::string::npos, "load_checkpoint: malformed header line '" << line << "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "format") {
      TTC_REQUIRE_IO(value == "1", "load_checkpoint: unsupported format version " << value);
    } else if (key == "config") {
      out.config_digest = value;
    } else if (key == "step") {
      step = std::stoull(value);
    } else if (key == "tensor") {
      std::istringstream ss(value);
      TensorRef ref;
      int rank = 0;
      ss >> ref.name >> rank;
      TTC_REQUIRE_IO(!ss.fail() && rank >= 1 && rank <= 3,
                     "load_checkpoint: malformed tensor line '" << line << "'");
      for (int i = 0; i < rank; ++i) {
        int d = 0;
        ss >> d;
        ref.shape.push_back(d);
      }
      ss >> ref.offset;
      TTC_REQUIRE_IO(!ss.fail(), "load_checkpoint: malformed tensor line '" << line << "'");
      refs.push_back(std::move(ref));
    } else {
      TTC_REQUIRE_IO(false, "load_checkpoint: unknown header key '" << key << "'");
    }
  }
  TTC_REQUIRE_IO(saw_end, "load_checkpoint: " << path << " truncated header");
  TTC_REQUIRE_IO(refs.size() % 3 == 0, "load_checkpoint: tensor manifest not in value/m/v triples");

  const std::streampos payload_start = f.tellg();
  f.seekg(0, std::ios::end);
  const std::size_t payload_bytes = static_cast<std::size_t>(f.tellg() - payload_start);
  f.seekg(payload_start);

  std::size_t expected_doubles = 0;
  for (const TensorRef& r : refs) expected_doubles += static_cast<std::size_t>(ad::shape_size(r.shape));
  TTC_REQUIRE_IO(payload_bytes == expected_doubles * sizeof(double),
                 "load_checkpoint: " << path << " payload has " << payload_bytes
                                     << " bytes, expected " << expected_doubles * sizeof(double));

  std::vector<double> payload(expected_doubles);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload_bytes));
  TTC_REQUIRE_IO(f.gcount() == static_cast<std::streamsize>(payload_bytes),
                 "load_checkpoint: short read on payload of " << path);

  for (std::size_t i = 0; i < refs.size(); i += 3) {
    const TensorRef& rv = refs[i];
    TTC_REQUIRE_IO(refs[i + 1].name == rv.name + ".adam_m" && refs[i + 2].name == rv.name + ".adam_v",
                   "load_checkpoint: tensor '" << rv.name << "' missing its moment buffers");
    ad::Tensor& value = out.store.create(rv.name, rv.shape);
    ParamStore::Entry& entry = out.store.entry(rv.name);
    auto fill = [&](ad::Tensor& dst, const TensorRef& r) {
      TTC_REQUIRE_IO(r.shape == rv.shape, "load_checkpoint: moment shape mismatch for '" << rv.name << "'");
      const std::size_t n = dst.values.size();
      TTC_REQUIRE_IO(r.offset + n <= payload.size(),
                     "load_checkpoint: tensor '" << r.name << "' offset out of range");
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(r.offset), n, dst.values.begin());
    };
    fill(value, rv);
    fill(entry.m, refs[i + 1]);
    fill(entry.v, refs[i + 2]);
  }
  out.store.set_step(step);
  return out;
}

}  // namespace ttc
