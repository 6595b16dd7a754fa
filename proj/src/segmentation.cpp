#include "plumetrace/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "plumetrace/errors.hpp"
#include "plumetrace/robust_stats.hpp"

namespace plumetrace {

void SegmentationParams::validate() const {
  if (!(n_sigma > 0.0)) throw ConfigError("segmentation.n_sigma must be > 0");
  if (!(close_radius_m >= 0.0) || !(open_radius_m >= 0.0)) throw ConfigError("segmentation radii must be >= 0");
  if (!(min_area_m2 >= 0.0)) throw ConfigError("segmentation.min_area_m2 must be >= 0");
  if (connectivity != 4 && connectivity != 8) throw ConfigError("segmentation.connectivity must be 4 or 8");
}

double robust_threshold(std::span<const double> background, double n_sigma) {
  if (background.empty()) throw DomainError("robust_threshold: empty background sample");
  return median(background) + n_sigma * robust_sigma(background);
}

int radius_to_pixels(double radius_m, double gsd_m) {
  if (!(gsd_m > 0.0)) throw DomainError("gsd must be > 0");
  return std::max(0, static_cast<int>(std::lround(radius_m / gsd_m)));
}

std::size_t area_to_pixels(double area_m2, double gsd_m) {
  if (!(gsd_m > 0.0)) throw DomainError("gsd must be > 0");
  const double px = std::ceil(area_m2 / (gsd_m * gsd_m));
  return px > 0.0 ? static_cast<std::size_t>(px) : 0;
}

std::vector<std::pair<int, int>> disk_offsets(int radius_px) {
  std::vector<std::pair<int, int>> out;
  for (int dl = -radius_px; dl <= radius_px; ++dl)
    for (int ds = -radius_px; ds <= radius_px; ++ds)
      if (dl * dl + ds * ds <= radius_px * radius_px) out.emplace_back(dl, ds);
  return out;
}

namespace {

// any_hit = true: dilation (some in-domain neighbor set).
// any_hit = false: erosion (every in-domain neighbor set).
Mask disk_filter(const Mask& mask, int radius_px, bool any_hit) {
  if (radius_px <= 0) return mask;
  const auto offsets = disk_offsets(radius_px);
  const auto lines = static_cast<long>(mask.lines());
  const auto samples = static_cast<long>(mask.samples());
  Mask out(mask.lines(), mask.samples(), 0);
  for (long l = 0; l < lines; ++l) {
    for (long s = 0; s < samples; ++s) {
      bool result = !any_hit;
      for (const auto& [dl, ds] : offsets) {
        const long ll = l + dl;
        const long ss = s + ds;
        if (ll < 0 || ll >= lines || ss < 0 || ss >= samples) continue;
        const bool v = mask(static_cast<std::size_t>(ll), static_cast<std::size_t>(ss)) != 0;
        if (any_hit && v) {
          result = true;
          break;
        }
        if (!any_hit && !v) {
          result = false;
          break;
        }
      }
      out(static_cast<std::size_t>(l), static_cast<std::size_t>(s)) = result ? 1 : 0;
    }
  }
  return out;
}

struct Corner {
  long x;
  long y;
  friend auto operator<=>(const Corner&, const Corner&) = default;
};

}  // namespace

Mask dilate(const Mask& mask, int radius_px) { return disk_filter(mask, radius_px, true); }
Mask erode(const Mask& mask, int radius_px) { return disk_filter(mask, radius_px, false); }
Mask opening(const Mask& mask, int radius_px) { return dilate(erode(mask, radius_px), radius_px); }
Mask closing(const Mask& mask, int radius_px) { return erode(dilate(mask, radius_px), radius_px); }

Mask morphology(const Mask& mask, const SegmentationParams& params, double gsd_m) {
  return opening(closing(mask, radius_to_pixels(params.close_radius_m, gsd_m)),
                 radius_to_pixels(params.open_radius_m, gsd_m));
}

std::vector<Ring> trace_polygon(const Mask& mask, double gsd_m, const GeoOrigin& origin) {
  const auto lines = static_cast<long>(mask.lines());
  const auto samples = static_cast<long>(mask.samples());
  auto on = [&](long l, long s) {
    return l >= 0 && l < lines && s >= 0 && s < samples && mask(static_cast<std::size_t>(l), static_cast<std::size_t>(s));
  };

  // Directed boundary edges with the mask on the right (screen frame, y down).
  std::multimap<Corner, Corner> edges;
  for (long l = 0; l < lines; ++l)
    for (long s = 0; s < samples; ++s) {
      if (!on(l, s)) continue;
      if (!on(l - 1, s)) edges.insert({{s, l}, {s + 1, l}});
      if (!on(l, s + 1)) edges.insert({{s + 1, l}, {s + 1, l + 1}});
      if (!on(l + 1, s)) edges.insert({{s + 1, l + 1}, {s, l + 1}});
      if (!on(l, s - 1)) edges.insert({{s, l + 1}, {s, l}});
    }

  struct IntRing {
    std::vector<Corner> pts;
    long twice_area = 0;
  };
  std::vector<IntRing> rings;
  while (!edges.empty()) {
    auto it = edges.begin();
    IntRing ring;
    const Corner start = it->first;
    Corner cur = it->second;
    long dx = cur.x - start.x;
    long dy = cur.y - start.y;
    ring.pts.push_back(start);
    edges.erase(it);
    while (!(cur == start)) {
      ring.pts.push_back(cur);
      auto [lo, hi] = edges.equal_range(cur);
      if (lo == hi) throw NumericalError("polygon tracing: open boundary");
      // At pinch vertices prefer the left turn so diagonal neighbours stay in one ring.
      auto chosen = lo;
      int best_rank = 3;
      for (auto e = lo; e != hi; ++e) {
        const long ex = e->second.x - cur.x;
        const long ey = e->second.y - cur.y;
        int rank = 2;
        if (ex == dy && ey == -dx) rank = 0;
        else if (ex == dx && ey == dy) rank = 1;
        if (rank < best_rank) {
          best_rank = rank;
          chosen = e;
        }
      }
      const Corner next = chosen->second;
      dx = next.x - cur.x;
      dy = next.y - cur.y;
      edges.erase(chosen);
      cur = next;
    }
    ring.pts.push_back(start);
    // Drop collinear vertices.
    std::vector<Corner> simple;
    const std::size_t n = ring.pts.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
      const Corner& prev = ring.pts[(i + n - 1) % n];
      const Corner& p = ring.pts[i];
      const Corner& nx = ring.pts[i + 1];
      const long cross = (p.x - prev.x) * (nx.y - p.y) - (p.y - prev.y) * (nx.x - p.x);
      if (cross != 0) simple.push_back(p);
    }
    simple.push_back(simple.front());
    ring.pts = std::move(simple);
    // Mask-on-the-right runs clockwise once northing points up; reversed on
    // output. This sum is already positive for exteriors in the y-down frame.
    for (std::size_t i = 0; i + 1 < ring.pts.size(); ++i)
      ring.twice_area += ring.pts[i].x * ring.pts[i + 1].y - ring.pts[i + 1].x * ring.pts[i].y;
    rings.push_back(std::move(ring));
  }
  std::stable_sort(rings.begin(), rings.end(), [](const IntRing& a, const IntRing& b) { return a.twice_area > b.twice_area; });

  std::vector<Ring> out;
  for (const auto& r : rings) {
    Ring ring;
    for (auto it = r.pts.rbegin(); it != r.pts.rend(); ++it) {
      const Corner& c = *it;
      ring.push_back({origin.easting + static_cast<double>(c.x) * gsd_m,
                      origin.northing - static_cast<double>(c.y) * gsd_m});
    }
    out.push_back(std::move(ring));
  }
  return out;
}

double ring_area(const Ring& ring) {
  if (ring.size() < 4) return 0.0;
  const MapPoint& o = ring.front();
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double x0 = ring[i].easting - o.easting;
    const double y0 = ring[i].northing - o.northing;
    const double x1 = ring[i + 1].easting - o.easting;
    const double y1 = ring[i + 1].northing - o.northing;
    twice += x0 * y1 - x1 * y0;
  }
  return 0.5 * twice;
}

double polygon_area(const std::vector<Ring>& polygon) {
  double a = 0.0;
  for (const auto& r : polygon) a += ring_area(r);
  return a;
}

std::vector<PlumeMask> connected_components(const Mask& mask, int connectivity, std::size_t min_pixels, double gsd_m,
                                            const GeoOrigin& origin) {
  if (connectivity != 4 && connectivity != 8) throw DomainError("connectivity must be 4 or 8");
  const auto lines = static_cast<long>(mask.lines());
  const auto samples = static_cast<long>(mask.samples());
  Grid<int> label(mask.lines(), mask.samples(), 0);
  std::vector<std::vector<Pixel>> components;
  std::deque<Pixel> queue;
  for (long l0 = 0; l0 < lines; ++l0)
    for (long s0 = 0; s0 < samples; ++s0) {
      const auto ul0 = static_cast<std::size_t>(l0);
      const auto us0 = static_cast<std::size_t>(s0);
      if (!mask(ul0, us0) || label(ul0, us0)) continue;
      const int id = static_cast<int>(components.size()) + 1;
      std::vector<Pixel> pixels;
      label(ul0, us0) = id;
      queue.push_back({ul0, us0});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        pixels.push_back(p);
        for (int dl = -1; dl <= 1; ++dl)
          for (int ds = -1; ds <= 1; ++ds) {
            if (dl == 0 && ds == 0) continue;
            if (connectivity == 4 && dl != 0 && ds != 0) continue;
            const long l = static_cast<long>(p.line) + dl;
            const long s = static_cast<long>(p.sample) + ds;
            if (l < 0 || l >= lines || s < 0 || s >= samples) continue;
            const auto ul = static_cast<std::size_t>(l);
            const auto us = static_cast<std::size_t>(s);
            if (mask(ul, us) && !label(ul, us)) {
              label(ul, us) = id;
              queue.push_back({ul, us});
            }
          }
      }
      components.push_back(std::move(pixels));
    }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < components.size(); ++i)
    if (components[i].size() >= min_pixels) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return components[a].size() > components[b].size(); });

  std::vector<PlumeMask> out;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& pixels = components[order[rank]];
    PlumeMask plume;
    plume.label_id = static_cast<int>(rank) + 1;
    plume.mask = Mask(mask.lines(), mask.samples(), 0);
    for (const auto& p : pixels) {
      plume.mask(p.line, p.sample) = 1;
      if (p.line == 0 || p.sample == 0 || p.line + 1 == mask.lines() || p.sample + 1 == mask.samples()) {
        plume.touches_edge = true;
      }
    }
    plume.pixel_count = pixels.size();
    plume.area_m2 = static_cast<double>(plume.pixel_count) * gsd_m * gsd_m;
    plume.polygon = trace_polygon(plume.mask, gsd_m, origin);
    out.push_back(std::move(plume));
  }
  return out;
}

std::vector<PlumeMask> segment_field(const EnhancementField& field, double threshold,
                                     const SegmentationParams& params) {
  params.validate();
  Mask above(field.lines(), field.samples(), 0);
  for (std::size_t i = 0; i < above.size(); ++i)
    above[i] = (!field.nodata[i] && field.delta_x[i] > threshold) ? 1 : 0;
  Mask cleaned = morphology(above, params, field.gsd_m);
  for (std::size_t i = 0; i < cleaned.size(); ++i)
    if (field.nodata[i]) cleaned[i] = 0;
  return connected_components(cleaned, params.connectivity, area_to_pixels(params.min_area_m2, field.gsd_m),
                              field.gsd_m, field.origin);
}

Grid<double> label_raster(const std::vector<PlumeMask>& plumes, std::size_t lines, std::size_t samples) {
  Grid<double> out(lines, samples, 0.0);
  for (const auto& p : plumes)
    for (std::size_t i = 0; i < out.size(); ++i)
      if (p.mask[i]) out[i] = p.label_id;
  return out;
}

namespace {

struct Footprint {
  double west, east, south, north;
};

Footprint footprint(const EnhancementField& f) {
  return {f.origin.easting, f.origin.easting + static_cast<double>(f.samples()) * f.gsd_m,
          f.origin.northing - static_cast<double>(f.lines()) * f.gsd_m, f.origin.northing};
}

EnhancementField crop_to(const EnhancementField& f, const Footprint& box) {
  const double g = f.gsd_m;
  const double eps = 1e-9 * g;
  auto clamp_index = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n)));
  };
  const std::size_t c0 = clamp_index(std::floor((box.west - f.origin.easting) / g + eps), f.samples());
  const std::size_t c1 = clamp_index(std::ceil((box.east - f.origin.easting) / g - eps), f.samples());
  const std::size_t r0 = clamp_index(std::floor((f.origin.northing - box.north) / g + eps), f.lines());
  const std::size_t r1 = clamp_index(std::ceil((f.origin.northing - box.south) / g - eps), f.lines());
  const std::size_t lines = r1 - r0;
  const std::size_t samples = c1 - c0;

  auto crop = [&](const Grid<double>& src) {
    Grid<double> out(lines, samples);
    for (std::size_t l = 0; l < lines; ++l)
      for (std::size_t s = 0; s < samples; ++s) out(l, s) = src(r0 + l, c0 + s);
    return out;
  };
  EnhancementField out;
  out.delta_x = crop(f.delta_x);
  if (f.sigma_noise) out.sigma_noise = crop(*f.sigma_noise);
  if (f.sigma_clutter) out.sigma_clutter = crop(*f.sigma_clutter);
  if (f.sigma_total) out.sigma_total = crop(*f.sigma_total);
  out.gsd_m = g;
  out.origin = {f.origin.easting + static_cast<double>(c0) * g, f.origin.northing - static_cast<double>(r0) * g};
  out.provenance = f.provenance + "; overlap-conditioned";
  out.nodata = Mask(lines, samples, 0);
  for (std::size_t l = 0; l < lines; ++l)
    for (std::size_t s = 0; s < samples; ++s) {
      const double ce = out.origin.easting + (static_cast<double>(s) + 0.5) * g;
      const double cn = out.origin.northing - (static_cast<double>(l) + 0.5) * g;
      const bool inside = ce >= box.west && ce <= box.east && cn >= box.south && cn <= box.north;
      if (f.nodata(r0 + l, c0 + s) || !inside) {
        out.nodata(l, s) = 1;
        out.delta_x(l, s) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  return out;
}

}  // namespace

std::pair<EnhancementField, EnhancementField> overlap_condition(const EnhancementField& a, const EnhancementField& b) {
  const Footprint fa = footprint(a);
  const Footprint fb = footprint(b);
  const Footprint box{std::max(fa.west, fb.west), std::min(fa.east, fb.east), std::max(fa.south, fb.south),
                      std::min(fa.north, fb.north)};
  if (!(box.east > box.west) || !(box.north > box.south)) throw DomainError("disjoint footprints");
  return {crop_to(a, box), crop_to(b, box)};
}

}  // namespace plumetrace
