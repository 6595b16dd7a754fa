#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plumetrace/grid.hpp"
#include "plumetrace/scene_io.hpp"

namespace plumetrace {

struct SegmentationParams {
  double n_sigma = 3.0;
  double close_radius_m = 60.0;
  double open_radius_m = 30.0;
  double min_area_m2 = 10000.0;
  int connectivity = 8;

  void validate() const;
};

/// Vertex in scene map coordinates (m).
struct MapPoint {
  double easting = 0.0;
  double northing = 0.0;
  friend bool operator==(const MapPoint&, const MapPoint&) = default;
};

/// Closed ring; the first vertex is repeated at the end.
using Ring = std::vector<MapPoint>;

struct PlumeMask {
  int label_id = 0;
  Mask mask;
  std::size_t pixel_count = 0;
  double area_m2 = 0.0;
  // rings[0] is the exterior (counter-clockwise); further rings are holes (clockwise).
  std::vector<Ring> polygon;
  bool touches_edge = false;
};

/// median(bg) + n_sigma * 1.4826 * MAD(bg), with the standard deviation
/// standing in when the MAD is zero.
double robust_threshold(std::span<const double> background, double n_sigma);

/// Metric radius -> whole pixels (round half away from zero, floor at 0).
int radius_to_pixels(double radius_m, double gsd_m);
/// Metric area -> minimum pixel count (ceiling).
std::size_t area_to_pixels(double area_m2, double gsd_m);

/// Disk structuring element: offsets with Euclidean distance <= radius.
std::vector<std::pair<int, int>> disk_offsets(int radius_px);

/// Binary dilation / erosion with a disk. Pixels outside the raster do not
/// contribute to dilation and do not veto erosion, so the pair is an
/// adjunction on the raster domain (opening and closing are idempotent).
Mask dilate(const Mask& mask, int radius_px);
Mask erode(const Mask& mask, int radius_px);
Mask opening(const Mask& mask, int radius_px);
Mask closing(const Mask& mask, int radius_px);

/// Closing with close_radius_m, then opening with open_radius_m.
Mask morphology(const Mask& mask, const SegmentationParams& params, double gsd_m);

/// Labels components, drops those below min_pixels, sorts by area
/// (label 1 = largest) and traces each polygon.
std::vector<PlumeMask> connected_components(const Mask& mask, int connectivity, std::size_t min_pixels,
                                            double gsd_m, const GeoOrigin& origin = {});

/// Rectilinear boundary rings of a mask (exterior CCW, holes CW in map frame).
std::vector<Ring> trace_polygon(const Mask& mask, double gsd_m, const GeoOrigin& origin);

/// Signed shoelace area of a closed ring (positive when counter-clockwise).
double ring_area(const Ring& ring);
/// Sum of signed ring areas: exterior minus holes.
double polygon_area(const std::vector<Ring>& polygon);

/// Threshold + morphology + labeling over the valid pixels of a field.
std::vector<PlumeMask> segment_field(const EnhancementField& field, double threshold,
                                     const SegmentationParams& params);

/// Union of plume masks as a label raster (0 = background, else label_id).
Grid<double> label_raster(const std::vector<PlumeMask>& plumes, std::size_t lines, std::size_t samples);

/// Crops both fields to their common footprint; pixels whose centers fall
/// outside it become nodata.
std::pair<EnhancementField, EnhancementField> overlap_condition(const EnhancementField& a,
                                                                const EnhancementField& b);

}  // namespace plumetrace
