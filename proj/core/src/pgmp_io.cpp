#include "dmar/pgmp_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "dmar/error.hpp"

namespace dmar {

namespace {

static_assert(std::endian::native == std::endian::little, "PGMP payloads are stored in host order");

constexpr char kMagic[4] = {'P', 'G', 'M', 'P'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw IoError("pgmp: truncated header");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
    pos += sizeof(T);
    return v;
}

template <class T>
PgmpTensor pack(const std::vector<T>& v, std::vector<std::uint64_t> dims, DType dt) {
    PgmpTensor t;
    t.dtype = dt;
    t.dims = std::move(dims);
    if (t.numel() != v.size()) throw ShapeError("pgmp: dims do not match element count");
    t.payload.resize(v.size() * sizeof(T));
    if (!v.empty()) std::memcpy(t.payload.data(), v.data(), t.payload.size());
    return t;
}

template <class T>
std::vector<T> unpack(const PgmpTensor& t, DType dt) {
    if (t.dtype != dt)
        throw IoError("pgmp: expected dtype " + std::string(dtype_name(dt)) + ", found " +
                      std::string(dtype_name(t.dtype)));
    std::vector<T> v(t.numel());
    if (!v.empty()) std::memcpy(v.data(), t.payload.data(), v.size() * sizeof(T));
    return v;
}

void expect_dims(const PgmpTensor& t, std::size_t ndim, const char* what) {
    if (t.dims.size() != ndim) throw IoError(std::string("pgmp: ") + what + " needs " + std::to_string(ndim) + " dims");
}

}  // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U8: return 1;
    }
    throw IoError("pgmp: unknown dtype");
}

std::string_view dtype_name(DType t) {
    switch (t) {
        case DType::F32: return "f32";
        case DType::F64: return "f64";
        case DType::U8: return "u8";
    }
    return "?";
}

std::size_t PgmpTensor::numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

std::vector<std::uint8_t> encode_pgmp(const PgmpTensor& t) {
    if (t.dims.size() > 255) throw ShapeError("pgmp: too many dims");
    if (t.payload.size() != t.numel() * dtype_size(t.dtype)) throw ShapeError("pgmp: payload does not match dims");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le<std::uint16_t>(out, kVersion);
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

PgmpTensor decode_pgmp(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("pgmp: bad magic");
    std::size_t pos = 4;
    const auto version = get_le<std::uint16_t>(bytes, pos);
    if (version != kVersion) throw IoError("pgmp: unsupported version " + std::to_string(version));
    PgmpTensor t;
    const auto code = bytes[pos++];
    if (code > 2) throw IoError("pgmp: unknown dtype code " + std::to_string(code));
    t.dtype = static_cast<DType>(code);
    const std::size_t ndim = bytes[pos++];
    for (std::size_t i = 0; i < ndim; ++i) t.dims.push_back(get_le<std::uint64_t>(bytes, pos));
    const std::size_t expected = t.numel() * dtype_size(t.dtype);
    if (bytes.size() - pos != expected)
        throw IoError("pgmp: payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(expected));
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

void write_pgmp(const std::filesystem::path& path, const PgmpTensor& t) { write_file_bytes(path, encode_pgmp(t)); }
PgmpTensor read_pgmp(const std::filesystem::path& path) { return decode_pgmp(read_file_bytes(path)); }

PgmpTensor to_pgmp(const std::vector<double>& v, std::vector<std::uint64_t> dims) {
    return pack(v, std::move(dims), DType::F64);
}
PgmpTensor to_pgmp(const std::vector<float>& v, std::vector<std::uint64_t> dims) {
    return pack(v, std::move(dims), DType::F32);
}
PgmpTensor to_pgmp(const std::vector<std::uint8_t>& v, std::vector<std::uint64_t> dims) {
    return pack(v, std::move(dims), DType::U8);
}
std::vector<double> pgmp_f64(const PgmpTensor& t) { return unpack<double>(t, DType::F64); }
std::vector<float> pgmp_f32(const PgmpTensor& t) { return unpack<float>(t, DType::F32); }
std::vector<std::uint8_t> pgmp_u8(const PgmpTensor& t) { return unpack<std::uint8_t>(t, DType::U8); }

PgmpTensor volume_to_pgmp(const Volume& v) { return to_pgmp(v.data, {v.nz(), v.ny(), v.nx()}); }
PgmpTensor mask_to_pgmp(const MaskVolume& v) { return to_pgmp(v.data, {v.nz(), v.ny(), v.nx()}); }

Volume volume_from_pgmp(const PgmpTensor& t, std::array<double, 3> spacing_mm) {
    expect_dims(t, 3, "volume");
    Volume v({t.dims[2], t.dims[1], t.dims[0]}, spacing_mm);
    v.data = pgmp_f64(t);
    return v;
}

MaskVolume mask_from_pgmp(const PgmpTensor& t, std::array<double, 3> spacing_mm) {
    expect_dims(t, 3, "mask");
    MaskVolume v({t.dims[2], t.dims[1], t.dims[0]}, spacing_mm);
    v.data = pgmp_u8(t);
    return v;
}

PgmpTensor image_to_pgmp(const Image& img) { return to_pgmp(img.data, {img.rows, img.cols}); }

Image image_from_pgmp(const PgmpTensor& t, double spacing_mm) {
    expect_dims(t, 2, "image");
    Image img(t.dims[0], t.dims[1], spacing_mm);
    img.data = pgmp_f64(t);
    return img;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

void write_sinogram(const std::filesystem::path& path, const Sinogram& s) {
    write_pgmp(path, to_pgmp(s.data, {s.n_angles(), s.n_detectors()}));
    const auto& g = s.geometry;
    nlohmann::ordered_json j;
    j["sinogram"]["unit"] = std::string(unit_name(s.unit));
    j["geometry"] = {{"n_angles", g.n_angles},
                     {"n_detectors", g.n_detectors},
                     {"detector_spacing_mm", g.detector_spacing_mm},
                     {"step_fraction", g.step_fraction}};
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(sidecar_path(path), std::vector<std::uint8_t>(text.begin(), text.end()));
}

Sinogram read_sinogram(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(sidecar_path(path));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("sinogram sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    ProjectionGeometry g;
    try {
        g.n_angles = j.at("geometry").at("n_angles").get<std::size_t>();
        g.n_detectors = j.at("geometry").at("n_detectors").get<std::size_t>();
        g.detector_spacing_mm = j.at("geometry").at("detector_spacing_mm").get<double>();
        g.step_fraction = j.at("geometry").value("step_fraction", 0.5);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("sinogram sidecar geometry: " + std::string(e.what()));
    }
    Sinogram s(g, parse_unit(j.at("sinogram").at("unit").get<std::string>()));
    const PgmpTensor t = read_pgmp(path);
    expect_dims(t, 2, "sinogram");
    if (t.dims[0] != g.n_angles || t.dims[1] != g.n_detectors) throw IoError("sinogram: payload dims differ from sidecar");
    s.data = pgmp_f64(t);
    return s;
}

void write_archive(const std::filesystem::path& dir, const std::vector<std::pair<std::string, PgmpTensor>>& tensors) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json index;
    index["format"] = "pgmp-archive";
    index["version"] = 1;
    index["tensors"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, t] = tensors[i];
        const std::string file = std::to_string(i) + "_" + name + ".pgmp";
        write_pgmp(dir / file, t);
        index["tensors"].push_back({{"name", name}, {"file", file}, {"dtype", dtype_name(t.dtype)}, {"dims", t.dims}});
    }
    const std::string text = index.dump(2) + "\n";
    write_file_bytes(dir / "index.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::pair<std::string, PgmpTensor>> read_archive(const std::filesystem::path& dir) {
    const auto bytes = read_file_bytes(dir / "index.json");
    std::vector<std::pair<std::string, PgmpTensor>> out;
    try {
        const auto index = nlohmann::json::parse(bytes.begin(), bytes.end());
        for (const auto& e : index.at("tensors")) {
            PgmpTensor t = read_pgmp(dir / e.at("file").get<std::string>());
            if (t.dims != e.at("dims").get<std::vector<std::uint64_t>>())
                throw IoError("archive: dims of " + e.at("name").get<std::string>() + " differ from index");
            out.emplace_back(e.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("archive index " + (dir / "index.json").string() + ": " + e.what());
    }
    return out;
}

template <class T>
PgmpTensor tensor_to_pgmp(const ad::Tensor<T>& t) {
    return to_pgmp(t.data, std::vector<std::uint64_t>(t.shape.begin(), t.shape.end()));
}

template <class T>
ad::Tensor<T> tensor_from_pgmp(const PgmpTensor& t) {
    ad::Shape s(t.dims.begin(), t.dims.end());
    if constexpr (std::is_same_v<T, float>)
        return ad::Tensor<T>(std::move(s), pgmp_f32(t));
    else
        return ad::Tensor<T>(std::move(s), pgmp_f64(t));
}

template PgmpTensor tensor_to_pgmp<float>(const ad::Tensor<float>&);
template PgmpTensor tensor_to_pgmp<double>(const ad::Tensor<double>&);
template ad::Tensor<float> tensor_from_pgmp<float>(const PgmpTensor&);
template ad::Tensor<double> tensor_from_pgmp<double>(const PgmpTensor&);

}  // namespace dmar
