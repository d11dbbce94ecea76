/** Deterministic layered layout for the study graph.
 *
 * Nodes are assigned to layers by longest path from the roots, ordered
 * lexicographically within a layer, and spaced on a fixed grid. The same
 * graph always produces the same coordinates, so rendered views are
 * snapshot-stable.
 */

export interface LayoutNode {
  name: string;
  x: number;
  y: number;
  layer: number;
}

export interface Layout {
  nodes: Map<string, LayoutNode>;
  width: number;
  height: number;
}

const COLUMN_WIDTH = 130;
const ROW_HEIGHT = 90;
const MARGIN_X = 70;
const MARGIN_Y = 45;

export function layoutDag(
  nodes: string[],
  edges: [string, string][],
): Layout {
  const names = [...nodes].sort();
  const children = new Map<string, string[]>();
  const indegree = new Map<string, number>();
  for (const n of names) {
    children.set(n, []);
    indegree.set(n, 0);
  }
  for (const [a, b] of edges) {
    if (!children.has(a) || !children.has(b)) {
      throw new Error(`edge references unknown node: ${a} -> ${b}`);
    }
    children.get(a)!.push(b);
    indegree.set(b, (indegree.get(b) ?? 0) + 1);
  }

  // Longest-path layering via Kahn's algorithm; lexicographic tie-break
  // keeps the traversal order (and thus the layout) deterministic.
  const layer = new Map<string, number>();
  const ready = names.filter((n) => indegree.get(n) === 0).sort();
  for (const n of ready) layer.set(n, 0);
  const remaining = new Map(indegree);
  let processed = 0;
  while (ready.length > 0) {
    const node = ready.shift()!;
    processed += 1;
    for (const child of [...children.get(node)!].sort()) {
      const depth = Math.max(layer.get(child) ?? 0, layer.get(node)! + 1);
      layer.set(child, depth);
      const left = remaining.get(child)! - 1;
      remaining.set(child, left);
      if (left === 0) {
        ready.push(child);
        ready.sort();
      }
    }
  }
  if (processed !== names.length) {
    throw new Error("graph contains a cycle; cannot lay out");
  }

  const layers = new Map<number, string[]>();
  for (const n of names) {
    const d = layer.get(n)!;
    if (!layers.has(d)) layers.set(d, []);
    layers.get(d)!.push(n);
  }
  const depths = [...layers.keys()].sort((a, b) => a - b);
  const widest = Math.max(1, ...[...layers.values()].map((v) => v.length));

  const placed = new Map<string, LayoutNode>();
  const width = 2 * MARGIN_X + (widest - 1) * COLUMN_WIDTH;
  for (const d of depths) {
    const row = layers.get(d)!.sort();
    const rowWidth = (row.length - 1) * COLUMN_WIDTH;
    const startX = MARGIN_X + (width - 2 * MARGIN_X - rowWidth) / 2;
    row.forEach((name, i) => {
      placed.set(name, {
        name,
        x: startX + i * COLUMN_WIDTH,
        y: MARGIN_Y + d * ROW_HEIGHT,
        layer: d,
      });
    });
  }
  const height = 2 * MARGIN_Y + (depths.length - 1) * ROW_HEIGHT;
  return { nodes: placed, width, height };
}
