// Minimal OBJ reader for the mesh endpoint (v/f records, 1-based indices).

export interface ParsedMesh {
  positions: Float32Array; // xyz triples
  indices: Uint32Array; // triangle corners
}

export function parseObj(text: string): ParsedMesh {
  const positions: number[] = [];
  const indices: number[] = [];
  for (const line of text.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "v" && parts.length >= 4) {
      positions.push(Number(parts[1]), Number(parts[2]), Number(parts[3]));
    } else if (parts[0] === "f" && parts.length >= 4) {
      for (const corner of parts.slice(1, 4)) {
        indices.push(Number(corner.split("/")[0]) - 1);
      }
    }
  }
  return {
    positions: new Float32Array(positions),
    indices: new Uint32Array(indices),
  };
}
