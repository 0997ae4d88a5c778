#include "lumeneit/mesh_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lumeneit/error.hpp"

namespace lumeneit {

namespace {

constexpr int kVtkTetra = 10;

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << std::setprecision(12);
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    return is;
}

std::string next_token(std::istream& is, const std::string& context) {
    std::string tok;
    if (!(is >> tok)) throw InputError("unexpected end of file while reading " + context);
    return tok;
}

template <typename T>
T next_value(std::istream& is, const std::string& context) {
    T v{};
    if (!(is >> v)) throw InputError("malformed " + context);
    return v;
}

} // namespace

void write_vtk(const Mesh& mesh, const std::filesystem::path& path, const std::vector<CellField>& fields) {
    for (const auto& f : fields) {
        if (f.values.size() != mesh.elements.size())
            throw InputError("cell field '" + f.name + "' has the wrong length");
    }
    auto os = open_out(path);
    os << "# vtk DataFile Version 3.0\n"
       << "lumeneit mesh\n"
       << "ASCII\n"
       << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.nodes.size() << " double\n";
    for (const auto& p : mesh.nodes) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    os << "CELLS " << mesh.elements.size() << ' ' << 5 * mesh.elements.size() << '\n';
    for (const auto& t : mesh.elements) os << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
    os << "CELL_TYPES " << mesh.elements.size() << '\n';
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) os << kVtkTetra << '\n';
    os << "CELL_DATA " << mesh.elements.size() << '\n';
    os << "SCALARS region int 1\nLOOKUP_TABLE default\n";
    for (std::size_t e = 0; e < mesh.elements.size(); ++e)
        os << (e < mesh.element_region.size() ? mesh.element_region[e] : kRegionBulk) << '\n';
    for (const auto& f : fields) {
        os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
        for (double v : f.values) os << v << '\n';
    }
    if (!os) throw InputError("failed writing '" + path.string() + "'");
}

Mesh read_vtk(const std::filesystem::path& path) {
    auto is = open_in(path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("# vtk DataFile", 0) != 0) throw InputError("'" + path.string() + "' is not a legacy VTK file");
    std::getline(is, line); // title
    std::getline(is, line);
    if (line.rfind("ASCII", 0) != 0) throw InputError("only ASCII VTK files are supported");

    Mesh mesh;
    std::string tok;
    while (is >> tok) {
        if (tok == "DATASET") {
            if (next_token(is, "DATASET") != "UNSTRUCTURED_GRID")
                throw InputError("only UNSTRUCTURED_GRID datasets are supported");
        } else if (tok == "POINTS") {
            const auto n = next_value<std::size_t>(is, "POINTS header");
            next_token(is, "POINTS type");
            mesh.nodes.resize(n);
            for (auto& p : mesh.nodes) {
                p.x() = next_value<double>(is, "point");
                p.y() = next_value<double>(is, "point");
                p.z() = next_value<double>(is, "point");
            }
        } else if (tok == "CELLS") {
            const auto n = next_value<std::size_t>(is, "CELLS header");
            next_value<std::size_t>(is, "CELLS header");
            mesh.elements.resize(n);
            for (auto& t : mesh.elements) {
                if (next_value<int>(is, "cell") != 4) throw InputError("only tetrahedral cells are supported");
                for (auto& v : t) {
                    v = next_value<int>(is, "cell");
                    if (v < 0 || static_cast<std::size_t>(v) >= mesh.nodes.size())
                        throw InputError("cell references a missing point");
                }
            }
        } else if (tok == "CELL_TYPES") {
            const auto n = next_value<std::size_t>(is, "CELL_TYPES header");
            for (std::size_t i = 0; i < n; ++i) {
                if (next_value<int>(is, "cell type") != kVtkTetra)
                    throw InputError("only tetrahedral cells are supported");
            }
        } else if (tok == "CELL_DATA") {
            next_value<std::size_t>(is, "CELL_DATA header");
        } else if (tok == "SCALARS") {
            const std::string name = next_token(is, "SCALARS name");
            next_token(is, "SCALARS type");
            std::getline(is, line); // optional component count
            next_token(is, "LOOKUP_TABLE");
            next_token(is, "LOOKUP_TABLE name");
            if (name == "region") {
                mesh.element_region.resize(mesh.elements.size());
                for (auto& r : mesh.element_region) r = next_value<int>(is, "region");
            } else {
                for (std::size_t i = 0; i < mesh.elements.size(); ++i) next_value<double>(is, "cell scalar");
            }
        } else {
            throw InputError("unsupported VTK section '" + tok + "'");
        }
    }
    if (mesh.element_region.empty()) mesh.element_region.assign(mesh.elements.size(), kRegionBulk);
    return mesh;
}

void write_electrode_map(const Mesh& mesh, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "# lumeneit electrode map\n";
    os << "version 1\n";
    os << "electrodes " << mesh.electrodes.size() << '\n';
    for (std::size_t e = 0; e < mesh.electrodes.size(); ++e) {
        os << "electrode " << e + 1 << ' ' << mesh.electrodes[e].size() << '\n';
        for (const auto& f : mesh.electrodes[e]) os << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
    if (!os) throw InputError("failed writing '" + path.string() + "'");
}

void read_electrode_map(Mesh& mesh, const std::filesystem::path& path) {
    auto is = open_in(path);
    std::string line;
    // Skip comment lines.
    while (is.peek() == '#') std::getline(is, line);
    if (next_token(is, "version") != "version" || next_value<int>(is, "version") != 1)
        throw InputError("unsupported electrode map version");
    if (next_token(is, "electrodes") != "electrodes") throw InputError("electrode map: missing count");
    const auto count = next_value<std::size_t>(is, "electrode count");
    std::vector<std::vector<Face>> electrodes(count);
    for (std::size_t e = 0; e < count; ++e) {
        if (next_token(is, "electrode") != "electrode") throw InputError("electrode map: expected 'electrode'");
        const auto index = next_value<std::size_t>(is, "electrode index");
        if (index != e + 1) throw InputError("electrode map: electrodes out of order");
        const auto faces = next_value<std::size_t>(is, "face count");
        if (faces == 0) throw InputError("electrode map: electrode without faces");
        electrodes[e].resize(faces);
        for (auto& f : electrodes[e]) {
            for (auto& v : f) {
                v = next_value<int>(is, "face");
                if (v < 0 || static_cast<std::size_t>(v) >= mesh.nodes.size())
                    throw InputError("electrode map references a missing node");
            }
        }
    }
    mesh.electrodes = std::move(electrodes);
}

std::filesystem::path electrode_map_path(const std::filesystem::path& vtk_path) {
    auto p = vtk_path;
    p.replace_extension(".electrodes");
    return p;
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& vtk_path) {
    write_vtk(mesh, vtk_path);
    write_electrode_map(mesh, electrode_map_path(vtk_path));
}

Mesh load_mesh(const std::filesystem::path& vtk_path) {
    Mesh mesh = read_vtk(vtk_path);
    read_electrode_map(mesh, electrode_map_path(vtk_path));
    return mesh;
}

} // namespace lumeneit
