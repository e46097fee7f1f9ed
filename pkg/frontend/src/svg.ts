/** Minimal deterministic SVG assembly: fixed canvas, fixed styles, all
 *  coordinates rounded to 0.01 px so identical inputs give identical bytes. */

export const WIDTH = 640;
export const HEIGHT = 440;
export const MARGIN = { left: 64, right: 24, top: 36, bottom: 48 };

export const PLOT_W = WIDTH - MARGIN.left - MARGIN.right;
export const PLOT_H = HEIGHT - MARGIN.top - MARGIN.bottom;

export const PALETTE = ["#2b6a99", "#c7522a", "#3a7d44", "#7b4b94",
                       "#b8860b", "#5f6a72"];
export const STABLE_FILL = "#9ecae1";
export const UNSTABLE_FILL = "#ffffff";

export function px(x: number): string {
  const v = Math.round(x * 100) / 100;
  // avoid "-0"
  return (Object.is(v, -0) ? 0 : v).toString();
}

export interface Scale {
  (x: number): number;
  min: number;
  max: number;
  log: boolean;
}

function makeScale(min: number, max: number, r0: number, r1: number,
                   log: boolean): Scale {
  const lo = log ? Math.log10(min) : min;
  const hi = log ? Math.log10(max) : max;
  const span = hi - lo || 1;
  const f = ((x: number) => {
    const v = log ? Math.log10(x) : x;
    return r0 + ((v - lo) / span) * (r1 - r0);
  }) as Scale;
  f.min = min;
  f.max = max;
  f.log = log;
  return f;
}

export function xScale(min: number, max: number, log = false): Scale {
  return makeScale(min, max, MARGIN.left, MARGIN.left + PLOT_W, log);
}

export function yScale(min: number, max: number, log = false): Scale {
  return makeScale(min, max, MARGIN.top + PLOT_H, MARGIN.top, log);
}

export function linTicks(min: number, max: number, count = 5): number[] {
  const span = max - min || 1;
  const raw = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map((m) => m * mag)
    .find((s) => span / s <= count) as number;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + 1e-9 * span;
       v += step) {
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

export function logTicks(min: number, max: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(min) - 1e-9);
       e <= Math.floor(Math.log10(max) + 1e-9); e += 1) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length >= 2 ? ticks : [min, max];
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const m = v / Math.pow(10, e);
    const ms = Math.round(m * 100) / 100;
    return `${ms}e${e}`;
  }
  return (Math.round(v * 1e6) / 1e6).toString();
}

export class Svg {
  private parts: string[] = [];

  constructor(title: string) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
      `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
      `font-family="Helvetica, Arial, sans-serif" font-size="12">`);
    this.parts.push(
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" ` +
      `fill="#ffffff"/>`);
    this.text(WIDTH / 2, MARGIN.top - 14, title,
              'text-anchor="middle" font-size="14"');
  }

  raw(s: string): void {
    this.parts.push(s);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       extra = ""): void {
    this.parts.push(
      `<line x1="${px(x1)}" y1="${px(y1)}" x2="${px(x2)}" y2="${px(y2)}" ` +
      `stroke="${stroke}"${extra ? " " + extra : ""}/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string,
       extra = ""): void {
    this.parts.push(
      `<rect x="${px(x)}" y="${px(y)}" width="${px(w)}" ` +
      `height="${px(h)}" fill="${fill}"${extra ? " " + extra : ""}/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(
      `<circle cx="${px(x)}" cy="${px(y)}" r="${r}" fill="${fill}"/>`);
  }

  polyline(pts: Array<[number, number]>, stroke: string, extra = ""): void {
    const d = pts.map(([x, y]) => `${px(x)},${px(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${d}" fill="none" stroke="${stroke}" ` +
      `stroke-width="1.5"${extra ? " " + extra : ""}/>`);
  }

  text(x: number, y: number, s: string, extra = ""): void {
    const esc = s.replace(/&/g, "&amp;").replace(/</g, "&lt;")
      .replace(/>/g, "&gt;");
    this.parts.push(
      `<text x="${px(x)}" y="${px(y)}"${extra ? " " + extra : ""}>` +
      `${esc}</text>`);
  }

  axes(sx: Scale, sy: Scale, xlabel: string, ylabel: string): void {
    const x0 = MARGIN.left;
    const x1 = MARGIN.left + PLOT_W;
    const y0 = MARGIN.top + PLOT_H;
    const y1 = MARGIN.top;
    this.line(x0, y0, x1, y0, "#000000");
    this.line(x0, y0, x0, y1, "#000000");
    const xt = sx.log ? logTicks(sx.min, sx.max) : linTicks(sx.min, sx.max);
    for (const v of xt) {
      const x = sx(v);
      this.line(x, y0, x, y0 + 5, "#000000");
      this.text(x, y0 + 18, fmtTick(v), 'text-anchor="middle"');
    }
    const yt = sy.log ? logTicks(sy.min, sy.max) : linTicks(sy.min, sy.max);
    for (const v of yt) {
      const y = sy(v);
      this.line(x0 - 5, y, x0, y, "#000000");
      this.text(x0 - 8, y + 4, fmtTick(v), 'text-anchor="end"');
    }
    this.text((x0 + x1) / 2, HEIGHT - 10, xlabel, 'text-anchor="middle"');
    this.text(16, (y0 + y1) / 2, ylabel,
              `text-anchor="middle" transform="rotate(-90 16 ${px((y0 + y1) / 2)})"`);
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}
