export type OverlapCategory = 'both_active' | 'both_inactive' | 'rct_only' | 'sct_only';

export interface CategoryCounts {
  both_active: number;
  both_inactive: number;
  rct_only: number;
  sct_only: number;
}

export const CATEGORY_COLORS: Record<OverlapCategory, string> = {
  both_active: '#2e7d32',
  both_inactive: '#90a4ae',
  rct_only: '#e65100',
  sct_only: '#6a1b9a',
};

/** Four-way agreement of two per-element activity vectors of equal length. */
export function categorize(rctActive: boolean[], sctActive: boolean[]): OverlapCategory[] {
  if (rctActive.length !== sctActive.length) {
    throw new Error(`activity vectors differ in length: ${rctActive.length} vs ${sctActive.length}`);
  }
  return rctActive.map((r, i) => {
    const s = sctActive[i];
    if (r && s) return 'both_active';
    if (!r && !s) return 'both_inactive';
    return r ? 'rct_only' : 'sct_only';
  });
}

export function categoryCounts(categories: OverlapCategory[]): CategoryCounts {
  const counts: CategoryCounts = { both_active: 0, both_inactive: 0, rct_only: 0, sct_only: 0 };
  for (const c of categories) counts[c] += 1;
  return counts;
}

export function countsTotal(counts: CategoryCounts): number {
  return counts.both_active + counts.both_inactive + counts.rct_only + counts.sct_only;
}

/**
 * Project a unit offset on the hemisphere (relative to the focus, array
 * frame) onto the unit disk: polar angle from the pole maps to radius,
 * azimuth is preserved. The pole lands at the origin, the equator on the
 * rim.
 */
export function projectPolar(offset: [number, number, number]): { x: number; y: number } {
  const [ox, oy, oz] = offset;
  const z = Math.min(1, Math.max(-1, oz));
  const theta = Math.acos(z);
  const r = Math.min(theta / (Math.PI / 2), 1);
  const psi = Math.atan2(oy, ox);
  return { x: r * Math.cos(psi), y: r * Math.sin(psi) };
}
