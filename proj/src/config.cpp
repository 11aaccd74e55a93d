#include "dyrect/config.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace dyrect {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_vec(const Vec3& v)
{
    return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z());
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep))
        out.push_back(part);
    return out;
}

// Typed access to the flat key=value map; remembers which keys were used so
// leftovers can be reported as unknown.
class Reader {
public:
    explicit Reader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    void get(const std::string& key, double& out)
    {
        if (const auto* s = take(key))
            out = to_double(*s, key);
    }
    void get(const std::string& key, int& out)
    {
        if (const auto* s = take(key)) {
            long long v = 0;
            parse_int(*s, key, v);
            out = static_cast<int>(v);
        }
    }
    void get(const std::string& key, std::uint64_t& out)
    {
        if (const auto* s = take(key)) {
            const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), out);
            if (ec != std::errc{} || ptr != s->data() + s->size() || s->empty())
                throw DataError("config key '" + key + "': expected a non-negative integer");
        }
    }
    void get(const std::string& key, bool& out)
    {
        if (const auto* s = take(key)) {
            if (*s == "true" || *s == "1")
                out = true;
            else if (*s == "false" || *s == "0")
                out = false;
            else
                throw DataError("config key '" + key + "': expected true or false");
        }
    }
    void get(const std::string& key, std::string& out)
    {
        if (const auto* s = take(key))
            out = *s;
    }
    void get(const std::string& key, Vec3& out)
    {
        if (const auto* s = take(key))
            out = to_vec(*s, key);
    }

    std::vector<Vec3> vec_list(const std::string& key)
    {
        std::vector<Vec3> out;
        if (const auto* s = take(key))
            for (const auto& part : split(*s, ';'))
                out.push_back(to_vec(part, key));
        return out;
    }
    std::vector<double> double_list(const std::string& key)
    {
        std::vector<double> out;
        if (const auto* s = take(key))
            for (const auto& part : split(*s, ';'))
                out.push_back(to_double(part, key));
        return out;
    }

    void reject_unused() const
    {
        for (const auto& [k, v] : kv_)
            if (!used_.count(k))
                throw DataError("unknown config key '" + k + "'");
    }

    std::set<int> region_indices() const
    {
        std::set<int> ids;
        const std::string prefix = "phantom.region.";
        for (const auto& [k, v] : kv_) {
            if (k.rfind(prefix, 0) != 0)
                continue;
            const auto rest = k.substr(prefix.size());
            const auto dot = rest.find('.');
            long long id = -1;
            if (dot == std::string::npos)
                throw DataError("config key '" + k + "': expected phantom.region.<n>.<field>");
            parse_int(rest.substr(0, dot), k, id);
            if (id < 0)
                throw DataError("config key '" + k + "': negative region index");
            ids.insert(static_cast<int>(id));
        }
        return ids;
    }

private:
    const std::string* take(const std::string& key)
    {
        const auto it = kv_.find(key);
        if (it == kv_.end())
            return nullptr;
        used_.insert(key);
        return &it->second;
    }

    static void parse_int(const std::string& s, const std::string& key, long long& out)
    {
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
            throw DataError("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    static double to_double(const std::string& s, const std::string& key)
    {
        std::string t = s;
        while (!t.empty() && t.front() == ' ')
            t.erase(t.begin());
        while (!t.empty() && t.back() == ' ')
            t.pop_back();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v))
            throw DataError("config key '" + key + "': expected a number, got '" + s + "'");
        return v;
    }
    static Vec3 to_vec(const std::string& s, const std::string& key)
    {
        const auto parts = split(s, ',');
        if (parts.size() != 3)
            throw DataError("config key '" + key + "': expected x,y,z");
        return {to_double(parts[0], key), to_double(parts[1], key), to_double(parts[2], key)};
    }

    const std::map<std::string, std::string>& kv_;
    std::set<std::string> used_;
};

const char* shape_name(PoreShape s)
{
    switch (s) {
    case PoreShape::sphere: return "sphere";
    case PoreShape::channel: return "channel";
    case PoreShape::blob_union: return "blob_union";
    }
    return "";
}

const char* method_name(ReconMethod m)
{
    switch (m) {
    case ReconMethod::dyrect: return "dyrect";
    case ReconMethod::sirt: return "sirt";
    case ReconMethod::sliding: return "sliding";
    }
    return "";
}

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& value,
                std::initializer_list<std::pair<const char*, Enum>> options)
{
    for (const auto& [name, e] : options)
        if (value == name)
            return e;
    throw DataError("config key '" + key + "': unsupported value '" + value + "'");
}

} // namespace

RunConfig RunConfig::from_key_values(const std::map<std::string, std::string>& kv)
{
    RunConfig c;
    Reader r(kv);
    std::string s;

    // phantom
    PhantomConfig& p = c.phantom;
    s = "flow";
    r.get("phantom.type", s);
    p.kind = parse_enum<PhantomKind>("phantom.type", s,
                                     {{"flow", PhantomKind::flow}, {"rupture", PhantomKind::rupture}});
    r.get("phantom.size", p.size);
    r.get("phantom.voxel_size_mm", p.voxel_size);
    r.get("phantom.generation_factor", p.generation_factor);
    r.get("phantom.matrix_mu", p.matrix_mu);
    r.get("phantom.fluid0_mu", p.fluid0_mu);
    r.get("phantom.fluid1_mu", p.fluid1_mu);
    r.get("phantom.matrix_radius_mm", p.matrix_radius);
    r.get("phantom.matrix_texture", p.matrix_texture);
    r.get("phantom.t_begin", p.t_begin);
    r.get("phantom.t_end", p.t_end);
    for (int id : r.region_indices()) {
        const std::string pre = "phantom.region." + std::to_string(id) + ".";
        PoreRegion reg;
        s = "sphere";
        r.get(pre + "shape", s);
        reg.shape = parse_enum<PoreShape>(pre + "shape", s,
                                          {{"sphere", PoreShape::sphere},
                                           {"channel", PoreShape::channel},
                                           {"blob_union", PoreShape::blob_union}});
        reg.centers = r.vec_list(pre + "centers_mm");
        reg.radii = r.double_list(pre + "radii_mm");
        s = "planar";
        r.get(pre + "front", s);
        reg.front = parse_enum<FrontType>(pre + "front", s,
                                          {{"planar", FrontType::planar}, {"radial", FrontType::radial}});
        r.get(pre + "direction", reg.front_direction);
        if (reg.front_direction.norm() > 0.0)
            reg.front_direction.normalize();
        r.get(pre + "speed_mm_per_rotation", reg.front_speed);
        r.get(pre + "start_time", reg.front_start_time);
        p.regions.push_back(std::move(reg));
    }
    r.get("phantom.rupture_time", p.rupture_time);
    r.get("phantom.film_mu", p.rupture.matrix_mu);
    r.get("phantom.gas_mu", p.rupture.gas_mu);
    r.get("phantom.bubble_radius_mm", p.rupture.bubble_radius);
    r.get("phantom.wall_thickness_mm", p.rupture.wall_thickness);
    r.get("phantom.neck_radius_mm", p.rupture.neck_radius);
    r.get("phantom.film_center_mm", p.rupture.center);
    r.get("phantom.sample_radius_mm", p.rupture.sample_radius);

    // geometry
    GeometryConfig& g = c.geometry;
    s = "parallel";
    r.get("geometry.beam", s);
    g.beam = parse_enum<BeamType>("geometry.beam", s,
                                  {{"parallel", BeamType::parallel}, {"cone", BeamType::cone}});
    r.get("geometry.det_rows", g.det_rows);
    r.get("geometry.det_cols", g.det_cols);
    r.get("geometry.pixel_pitch_mm", g.pixel_pitch);
    r.get("geometry.source_to_origin_mm", g.source_to_origin);
    r.get("geometry.origin_to_detector_mm", g.origin_to_detector);
    r.get("geometry.projections_per_rotation", g.projections_per_rotation);
    g.n_views = 3 * g.projections_per_rotation;
    if (r.has("geometry.rotations") && r.has("geometry.n_views"))
        throw DataError("config: give either geometry.rotations or geometry.n_views");
    if (r.has("geometry.rotations")) {
        int rotations = 0;
        r.get("geometry.rotations", rotations);
        g.n_views = rotations * g.projections_per_rotation;
    }
    r.get("geometry.n_views", g.n_views);
    r.get("geometry.start_angle_deg", g.start_angle_deg);
    r.get("geometry.start_time", g.start_time);

    // reconstruction
    ReconConfig& rc = c.recon;
    ReconParams& rp = rc.params;
    s = "dyrect";
    r.get("recon.method", s);
    rc.method = parse_enum<ReconMethod>("recon.method", s,
                                        {{"dyrect", ReconMethod::dyrect},
                                         {"sirt", ReconMethod::sirt},
                                         {"sliding", ReconMethod::sliding}});
    r.get("recon.lambda_t", rp.lambda_t);
    r.get("recon.lambda_0", rp.lambda_0);
    r.get("recon.lambda_1", rp.lambda_1);
    r.get("recon.lambda_delta", rp.lambda_delta);
    r.get("recon.lambda_mu", rp.lambda_mu);
    r.get("recon.epsilon", rp.epsilon);
    r.get("recon.iterations", rp.n_iterations);
    r.get("recon.subsets", rp.n_subsets);
    r.get("recon.use_weights", rp.use_weights);
    r.get("recon.weight_floor", rp.weight_floor);
    r.get("recon.ray_step", rp.ray_step);
    r.get("recon.fix_attenuations", rp.fix_attenuations);
    s = "zero";
    r.get("recon.init_attenuations", s);
    rc.init_attenuations = parse_enum<AttenuationInit>(
        "recon.init_attenuations", s,
        {{"zero", AttenuationInit::zero}, {"ground_truth", AttenuationInit::ground_truth}});
    s = "mid_scan";
    r.get("recon.init_tstar", s);
    if (s == "mid_scan") {
        rc.init_tstar_mid_scan = true;
    } else {
        rc.init_tstar_mid_scan = false;
        std::map<std::string, std::string> one{{"recon.init_tstar", s}};
        Reader single(one);
        single.get("recon.init_tstar", rc.init_tstar);
    }
    r.get("recon.sirt_iterations", rc.sirt_iterations);
    r.get("recon.sirt_relax", rc.sirt_relax);
    r.get("recon.sirt_subsets", rc.sirt_subsets);
    r.get("recon.window_views", rc.window_views);
    r.get("recon.stride_views", rc.stride_views);

    r.get("noise.sigma", c.noise.sigma);

    r.get("analysis.contrast_fraction", c.analysis.contrast_fraction);
    r.get("analysis.hist_bins", c.analysis.hist_bins);
    r.get("analysis.diff_threshold", c.analysis.diff_threshold);

    r.get("pipeline.phantom", c.stages.phantom);
    r.get("pipeline.simulate", c.stages.simulate);
    r.get("pipeline.reconstruct", c.stages.reconstruct);
    r.get("pipeline.analyze", c.stages.analyze);
    r.get("pipeline.seed", c.seed);
    r.get("pipeline.threads", c.threads);
    s = c.output_dir.string();
    r.get("pipeline.output_dir", s);
    c.output_dir = s;

    r.reject_unused();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    return from_key_values(read_key_value_file(path));
}

void RunConfig::validate() const
{
    const auto fail = [](const std::string& m) { throw DataError("config: " + m); };
    if (phantom.size < 2)
        fail("phantom.size must be >= 2");
    if (!(phantom.voxel_size > 0.0))
        fail("phantom.voxel_size_mm must be positive");
    if (!(phantom.generation_factor >= 1.0))
        fail("phantom.generation_factor must be >= 1");
    if (!(phantom.t_begin < phantom.t_end))
        fail("phantom.t_begin must precede phantom.t_end");
    if (phantom.kind == PhantomKind::flow && phantom.regions.empty())
        fail("flow phantom needs at least one phantom.region.<n>");
    if (geometry.det_rows < 1 || geometry.det_cols < 1 || !(geometry.pixel_pitch > 0.0))
        fail("detector description must be positive");
    if (geometry.beam == BeamType::cone && !(geometry.source_to_origin > 0.0))
        fail("cone beam needs geometry.source_to_origin_mm > 0");
    if (geometry.projections_per_rotation < 1 || geometry.n_views < 1)
        fail("view counts must be positive");
    recon.params.validate();
    if (recon.sirt_iterations < 1 || !(recon.sirt_relax > 0.0) || recon.sirt_subsets < 1)
        fail("SIRT settings must be positive");
    if (recon.window_views < 1 || recon.stride_views < 1)
        fail("sliding window sizes must be positive");
    if (!(noise.sigma >= 0.0))
        fail("noise.sigma must be >= 0");
    if (!(analysis.contrast_fraction >= 0.0 && analysis.contrast_fraction <= 1.0))
        fail("analysis.contrast_fraction must lie in [0, 1]");
    if (analysis.hist_bins < 2)
        fail("analysis.hist_bins must be >= 2");
    if (!(analysis.diff_threshold > 0.0 && analysis.diff_threshold < 1.0))
        fail("analysis.diff_threshold must lie in (0, 1)");
    if (threads < 1)
        fail("pipeline.threads must be >= 1");
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_key_values() const
{
    std::vector<std::pair<std::string, std::string>> out;
    const auto add = [&out](const std::string& k, const std::string& v) { out.emplace_back(k, v); };
    const auto num = [&add](const std::string& k, double v) { add(k, fmt(v)); };
    const auto integer = [&add](const std::string& k, long long v) { add(k, std::to_string(v)); };
    const auto flag = [&add](const std::string& k, bool v) { add(k, v ? "true" : "false"); };

    const PhantomConfig& p = phantom;
    add("phantom.type", p.kind == PhantomKind::flow ? "flow" : "rupture");
    integer("phantom.size", p.size);
    num("phantom.voxel_size_mm", p.voxel_size);
    num("phantom.generation_factor", p.generation_factor);
    if (p.kind == PhantomKind::flow) {
        num("phantom.matrix_mu", p.matrix_mu);
        num("phantom.fluid0_mu", p.fluid0_mu);
        num("phantom.fluid1_mu", p.fluid1_mu);
        num("phantom.matrix_radius_mm", p.matrix_radius);
        num("phantom.matrix_texture", p.matrix_texture);
        num("phantom.t_begin", p.t_begin);
        num("phantom.t_end", p.t_end);
        for (std::size_t i = 0; i < p.regions.size(); ++i) {
            const PoreRegion& reg = p.regions[i];
            const std::string pre = "phantom.region." + std::to_string(i) + ".";
            add(pre + "shape", shape_name(reg.shape));
            std::string centers, radii;
            for (std::size_t j = 0; j < reg.centers.size(); ++j)
                centers += (j ? ";" : "") + fmt_vec(reg.centers[j]);
            for (std::size_t j = 0; j < reg.radii.size(); ++j)
                radii += (j ? ";" : "") + fmt(reg.radii[j]);
            add(pre + "centers_mm", centers);
            add(pre + "radii_mm", radii);
            add(pre + "front", reg.front == FrontType::planar ? "planar" : "radial");
            add(pre + "direction", fmt_vec(reg.front_direction));
            num(pre + "speed_mm_per_rotation", reg.front_speed);
            num(pre + "start_time", reg.front_start_time);
        }
    } else {
        num("phantom.t_begin", p.t_begin);
        num("phantom.t_end", p.t_end);
        num("phantom.rupture_time", p.rupture_time);
        num("phantom.film_mu", p.rupture.matrix_mu);
        num("phantom.gas_mu", p.rupture.gas_mu);
        num("phantom.bubble_radius_mm", p.rupture.bubble_radius);
        num("phantom.wall_thickness_mm", p.rupture.wall_thickness);
        num("phantom.neck_radius_mm", p.rupture.neck_radius);
        add("phantom.film_center_mm", fmt_vec(p.rupture.center));
        num("phantom.sample_radius_mm", p.rupture.sample_radius);
    }

    const GeometryConfig& g = geometry;
    add("geometry.beam", g.beam == BeamType::cone ? "cone" : "parallel");
    integer("geometry.det_rows", g.det_rows);
    integer("geometry.det_cols", g.det_cols);
    num("geometry.pixel_pitch_mm", g.pixel_pitch);
    num("geometry.source_to_origin_mm", g.source_to_origin);
    num("geometry.origin_to_detector_mm", g.origin_to_detector);
    integer("geometry.projections_per_rotation", g.projections_per_rotation);
    integer("geometry.n_views", g.n_views);
    num("geometry.start_angle_deg", g.start_angle_deg);
    num("geometry.start_time", g.start_time);

    const ReconParams& rp = recon.params;
    add("recon.method", method_name(recon.method));
    num("recon.lambda_t", rp.lambda_t);
    num("recon.lambda_0", rp.lambda_0);
    num("recon.lambda_1", rp.lambda_1);
    num("recon.lambda_delta", rp.lambda_delta);
    num("recon.lambda_mu", rp.lambda_mu);
    num("recon.epsilon", rp.epsilon);
    integer("recon.iterations", rp.n_iterations);
    integer("recon.subsets", rp.n_subsets);
    flag("recon.use_weights", rp.use_weights);
    num("recon.weight_floor", rp.weight_floor);
    num("recon.ray_step", rp.ray_step);
    flag("recon.fix_attenuations", rp.fix_attenuations);
    add("recon.init_attenuations",
        recon.init_attenuations == AttenuationInit::zero ? "zero" : "ground_truth");
    add("recon.init_tstar", recon.init_tstar_mid_scan ? "mid_scan" : fmt(recon.init_tstar));
    integer("recon.sirt_iterations", recon.sirt_iterations);
    num("recon.sirt_relax", recon.sirt_relax);
    integer("recon.sirt_subsets", recon.sirt_subsets);
    integer("recon.window_views", recon.window_views);
    integer("recon.stride_views", recon.stride_views);

    num("noise.sigma", noise.sigma);
    num("analysis.contrast_fraction", analysis.contrast_fraction);
    integer("analysis.hist_bins", analysis.hist_bins);
    num("analysis.diff_threshold", analysis.diff_threshold);

    flag("pipeline.phantom", stages.phantom);
    flag("pipeline.simulate", stages.simulate);
    flag("pipeline.reconstruct", stages.reconstruct);
    flag("pipeline.analyze", stages.analyze);
    add("pipeline.seed", std::to_string(seed));
    integer("pipeline.threads", threads);
    return out;
}

} // namespace dyrect
