import {
  SchemaError,
  Table,
  listFiles,
  numColumn,
  readCsv,
  readJson,
  requireColumns,
} from "./schema";
import {
  MARGIN,
  PALETTE,
  PLOT_H,
  PLOT_W,
  STABLE_FILL,
  Scale,
  Svg,
  UNSTABLE_FILL,
  xScale,
  yScale,
} from "./svg";

export const KINDS = ["stabmap", "spectrum", "decay", "gaps",
                      "residual"] as const;
export type Kind = (typeof KINDS)[number];

function extent(vals: number[], padLog = false): [number, number] {
  const finite = vals.filter((v) => Number.isFinite(v));
  if (finite.length === 0) {
    throw new SchemaError("no finite values to plot");
  }
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (padLog) {
    lo *= 0.8;
    hi *= 1.25;
  } else {
    const pad = (hi - lo || 1) * 0.05;
    lo -= pad;
    hi += pad;
  }
  return [lo, hi];
}

function spacing(sorted: number[], fallback: number): number {
  let s = Infinity;
  for (let i = 1; i < sorted.length; i += 1) {
    s = Math.min(s, sorted[i] - sorted[i - 1]);
  }
  return Number.isFinite(s) ? s : fallback;
}

function uniqueSorted(vals: number[]): number[] {
  return Array.from(new Set(vals)).sort((a, b) => a - b);
}

function groupByN(t: Table, nIdx: number): Map<number, number[]> {
  const groups = new Map<number, number[]>();
  t.rows.forEach((r, i) => {
    const n = Number(r[nIdx]);
    if (!groups.has(n)) groups.set(n, []);
    (groups.get(n) as number[]).push(i);
  });
  return new Map(Array.from(groups.entries()).sort((a, b) => a[0] - b[0]));
}

function referenceSlopes(svg: Svg, sx: Scale, sy: Scale,
                         slopes: number[]): void {
  // power-law guide lines anchored at the upper left of the data box
  const tau0 = sx.min;
  const tau1 = sx.max;
  const y0 = sy.max;
  slopes.forEach((w, i) => {
    const y1 = y0 * Math.pow(tau0 / tau1, w);
    if (y1 < sy.min) {
      const tEnd = tau0 * Math.pow(y0 / sy.min, 1 / w);
      svg.polyline([[sx(tau0), sy(y0)], [sx(tEnd), sy(sy.min)]],
                   "#999999", 'stroke-dasharray="4 3"');
    } else {
      svg.polyline([[sx(tau0), sy(y0)], [sx(tau1), sy(y1)]],
                   "#999999", 'stroke-dasharray="4 3"');
    }
    svg.text(MARGIN.left + PLOT_W - 6, MARGIN.top + 14 + 14 * i,
             `slope -${w}`, 'text-anchor="end" fill="#999999"');
  });
}

function renderStabmap(dir: string): string {
  const t = readCsv(dir, "stabmap.csv");
  const [iEps, iT, iV] = requireColumns(t, ["eps", "T", "verdict"]);
  const eps = numColumn(t, iEps);
  const per = numColumn(t, iT);
  const epsU = uniqueSorted(eps);
  const perU = uniqueSorted(per);
  const de = spacing(epsU, 0.05);
  const dp = spacing(perU, 0.4);
  const sx = xScale(perU[0] - dp / 2, perU[perU.length - 1] + dp / 2);
  const sy = yScale(epsU[0] - de / 2, epsU[epsU.length - 1] + de / 2);
  const svg = new Svg("Spectral stability map");
  t.rows.forEach((r, i) => {
    const stable = r[iV] === "stable";
    const x = sx(per[i] - dp / 2);
    const y = sy(eps[i] + de / 2);
    svg.rect(x, y, sx(per[i] + dp / 2) - x, sy(eps[i] - de / 2) - y,
             stable ? STABLE_FILL : UNSTABLE_FILL,
             `stroke="#cccccc" class="${stable ? "cell-stable" : "cell-unstable"}"`);
  });
  const bands = readJson(dir, "stabmap.json");
  if (bands && bands.bands) {
    for (const key of Object.keys(bands.bands).sort()) {
      const band = bands.bands[key];
      if (!band) continue;
      const e = Number(key);
      for (const edge of band) {
        svg.line(sx(edge), sy(e - de / 2), sx(edge), sy(e + de / 2),
                 "#000000", 'stroke-dasharray="2 2"');
      }
    }
  }
  svg.axes(sx, sy, "period T", "dispersion eps");
  return svg.render();
}

function renderSpectrum(dir: string): string {
  const t = readCsv(dir, "spectrum.csv");
  const [iXi, iRe, iIm] = requireColumns(t,
    ["xi", "re_lambda", "im_lambda"]);
  const re = numColumn(t, iRe);
  const im = numColumn(t, iIm);
  const sx = xScale(...extent(re));
  const sy = yScale(...extent(im));
  const svg = new Svg("Bloch spectrum");
  if (sx.min < 0 && sx.max > 0) {
    svg.line(sx(0), MARGIN.top, sx(0), MARGIN.top + PLOT_H, "#999999",
             'stroke-dasharray="4 3"');
  }
  re.forEach((r, i) => {
    if (Number.isFinite(r) && Number.isFinite(im[i])) {
      svg.circle(sx(r), sy(im[i]), 2.5, PALETTE[0]);
    }
  });
  svg.axes(sx, sy, "Re lambda", "Im lambda");
  return svg.render();
}

function renderDecay(dir: string): string {
  const t = readCsv(dir, "decay.csv");
  const [iN, iT, iNorm] = requireColumns(t, ["N", "t", "norm"]);
  const times = numColumn(t, iT);
  const norms = numColumn(t, iNorm);
  if (norms.some((v) => !(v > 0))) {
    throw new SchemaError("decay.csv: norms must be positive for a "
                          + "log-log plot");
  }
  const sx = xScale(...extent(times.map((v) => 1 + v), true), true);
  const sy = yScale(...extent(norms, true), true);
  const svg = new Svg("Linear semigroup decay");
  referenceSlopes(svg, sx, sy, [0.25, 0.5, 0.75]);
  const fits = readJson(dir, "decay.json");
  let ci = 0;
  for (const [n, idx] of groupByN(t, iN)) {
    const color = PALETTE[ci % PALETTE.length];
    svg.polyline(idx.map((i) => [sx(1 + times[i]), sy(norms[i])]), color);
    let label = `N=${n}`;
    const fit = fits && fits.fits && fits.fits[String(n)];
    if (fit && typeof fit.exponent === "number") {
      label += ` slope ${fit.exponent.toFixed(3)}`;
    }
    svg.text(MARGIN.left + 8, MARGIN.top + 14 + 14 * ci, label,
             `fill="${color}"`);
    ci += 1;
  }
  svg.axes(sx, sy, "1 + t", "piece norm");
  return svg.render();
}

function renderGaps(dir: string): string {
  const t = readCsv(dir, "gaps.csv");
  const [iN, iG, iQ] = requireColumns(t,
    ["N", "gap", "quadratic_reference"]);
  const ns = numColumn(t, iN);
  const gaps = numColumn(t, iG);
  const quad = numColumn(t, iQ);
  const sx = xScale(...extent(ns, true), true);
  const sy = yScale(...extent(gaps.concat(quad), true), true);
  const svg = new Svg("Spectral gap vs lattice size");
  svg.polyline(ns.map((n, i) => [sx(n), sy(quad[i])]), "#999999",
               'stroke-dasharray="4 3"');
  svg.text(MARGIN.left + PLOT_W - 6, MARGIN.top + 14, "d (2 pi / NT)^2",
           'text-anchor="end" fill="#999999"');
  svg.polyline(ns.map((n, i) => [sx(n), sy(gaps[i])]), PALETTE[0]);
  ns.forEach((n, i) => svg.circle(sx(n), sy(gaps[i]), 3, PALETTE[0]));
  svg.axes(sx, sy, "lattice size N", "spectral gap");
  return svg.render();
}

function renderResidual(dir: string): string {
  const files = listFiles(dir).filter((f) => /^uniform_\d+\.csv$/.test(f));
  if (files.length === 0) {
    throw new SchemaError(
      "bundle has no uniform_<N>.csv residual series");
  }
  const fits = readJson(dir, "uniform.json");
  const series: Array<{ n: number; tau: number[]; res: number[] }> = [];
  for (const f of files) {
    const n = Number((f.match(/^uniform_(\d+)\.csv$/) as string[])[1]);
    const t = readCsv(dir, f);
    const [iT, iRes] = requireColumns(t, ["t", "res_l2"]);
    series.push({ n, tau: numColumn(t, iT).map((v) => 1 + v),
                  res: numColumn(t, iRes) });
  }
  series.sort((a, b) => a.n - b.n);
  const allT = series.flatMap((s) => s.tau);
  const allR = series.flatMap((s) => s.res).filter((v) => v > 0);
  const sx = xScale(...extent(allT, true), true);
  const sy = yScale(...extent(allR, true), true);
  const svg = new Svg("Modulated residual decay");
  referenceSlopes(svg, sx, sy, [0.25]);
  series.forEach((s, ci) => {
    const color = PALETTE[ci % PALETTE.length];
    const pts = s.tau
      .map((tv, i) => [tv, s.res[i]] as [number, number])
      .filter(([, r]) => r > 0)
      .map(([tv, r]) => [sx(tv), sy(r)] as [number, number]);
    svg.polyline(pts, color);
    let label = `N=${s.n}`;
    const fit = fits && fits.fits && fits.fits[String(s.n)];
    if (fit && typeof fit.zeta === "number") {
      label += ` zeta ${fit.zeta.toFixed(4)}`;
    }
    svg.text(MARGIN.left + 8, MARGIN.top + 14 + 14 * ci, label,
             `fill="${color}"`);
  });
  svg.axes(sx, sy, "1 + t", "residual L2 norm");
  return svg.render();
}

export function renderBundle(dir: string, kind: string): string {
  listFiles(dir); // existence check with a uniform error message
  switch (kind as Kind) {
    case "stabmap":
      return renderStabmap(dir);
    case "spectrum":
      return renderSpectrum(dir);
    case "decay":
      return renderDecay(dir);
    case "gaps":
      return renderGaps(dir);
    case "residual":
      return renderResidual(dir);
    default:
      throw new SchemaError(
        `unknown kind '${kind}' (expected ${KINDS.join(", ")})`);
  }
}
