#include "hrf/checkpoint.hpp"

#include "hrf/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hrf::nn {
namespace {

constexpr std::array<char, 8> kMagic{'H', 'R', 'F', 'C', 'K', 'P', 'T', '\x01'};

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), bytes.size())) throw InputError(std::string("checkpoint truncated reading ") + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_digest(const ForecastModel& model) { return fnv1a(model.config_string()); }

void write_checkpoint(std::ostream& out, const ForecastModel& model) {
    out.write(kMagic.data(), kMagic.size());
    const std::string name(model.name());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint64_t>(out, config_digest(model));
    put_le<std::uint64_t>(out, model.parameters().size());
    put_le<std::uint64_t>(out, model.parameter_count());
    for (const auto& p : model.parameters()) {
        for (double v : p.data()) put_le<double>(out, v);
    }
    if (!out) throw InputError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    write_checkpoint(out, model);
}

void read_checkpoint(std::istream& in, ForecastModel& model) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw InputError("not a checkpoint file");
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len > 256) throw InputError("checkpoint model name is implausibly long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw InputError("checkpoint truncated reading name");
    if (name != model.name()) throw InputError("checkpoint holds a " + name + " model, not " + std::string(model.name()));
    if (get_le<std::uint64_t>(in, "digest") != config_digest(model)) {
        throw InputError("checkpoint was written with a different " + name + " configuration");
    }
    const auto tensors = get_le<std::uint64_t>(in, "tensor count");
    const auto scalars = get_le<std::uint64_t>(in, "scalar count");
    if (tensors != model.parameters().size() || scalars != model.parameter_count()) {
        throw InputError("checkpoint parameter count does not match the model");
    }
    std::vector<double> values(scalars);
    for (auto& v : values) v = get_le<double>(in, "parameters");
    std::size_t offset = 0;
    for (auto p : model.parameters()) {
        auto dst = p.mutable_data();
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
        offset += dst.size();
    }
}

void load_checkpoint(const std::filesystem::path& path, ForecastModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    read_checkpoint(in, model);
}

}  // namespace hrf::nn
