// Geodetic to scene-space mapping for the globe rendering. The scene
// uses a unit Earth; altitudes are passed already scaled to that unit.

export const EARTH_RADIUS = 1.0;

export interface SceneCoordinates {
  x: number;
  y: number;
  z: number;
}

export function toScene(latDeg: number, lonDeg: number,
                        alt = 0): SceneCoordinates {
  const phi = ((90 - latDeg) * Math.PI) / 180;
  const theta = ((lonDeg + 180) * Math.PI) / 180;
  const r = EARTH_RADIUS + alt;
  return {
    x: -r * Math.sin(phi) * Math.cos(theta),
    y: r * Math.cos(phi),
    z: r * Math.sin(phi) * Math.sin(theta),
  };
}

export function norm(v: SceneCoordinates): number {
  return Math.hypot(v.x, v.y, v.z);
}

// Equirectangular projection used by the 2D ground-track map.
export function toMap(latDeg: number, lonDeg: number, width: number,
                      height: number): { x: number; y: number } {
  return {
    x: ((lonDeg + 180) / 360) * width,
    y: ((90 - latDeg) / 180) * height,
  };
}
