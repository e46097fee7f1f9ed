import * as fs from "fs";
import * as path from "path";

export class SchemaError extends Error {}

export interface Table {
  file: string;
  header: string[];
  rows: string[][];
}

/** Read one of the workbench CSVs: a single header line, comma-separated
 *  cells, no quoting (the producer never emits commas inside cells). */
export function readCsv(dir: string, name: string): Table {
  const file = path.join(dir, name);
  if (!fs.existsSync(file)) {
    throw new SchemaError(`bundle is missing ${name}`);
  }
  const text = fs.readFileSync(file, "utf8");
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${name}: empty file`);
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((l) => l.split(","));
  for (const r of rows) {
    if (r.length !== header.length) {
      throw new SchemaError(
        `${name}: row has ${r.length} cells, header has ${header.length}`);
    }
  }
  if (rows.length === 0) {
    throw new SchemaError(`${name}: no data rows`);
  }
  return { file: name, header, rows };
}

/** Resolve required columns to indices, listing every missing name. */
export function requireColumns(t: Table, names: string[]): number[] {
  const missing = names.filter((n) => t.header.indexOf(n) < 0);
  if (missing.length > 0) {
    throw new SchemaError(
      `${t.file}: missing column(s): ${missing.join(", ")}`);
  }
  return names.map((n) => t.header.indexOf(n));
}

export function numColumn(t: Table, idx: number): number[] {
  return t.rows.map((r, i) => {
    const v = Number(r[idx]);
    if (r[idx] !== "nan" && Number.isNaN(v)) {
      throw new SchemaError(
        `${t.file}: non-numeric value '${r[idx]}' in row ${i + 1}`);
    }
    return v;
  });
}

export function readJson(dir: string, name: string): any | null {
  const file = path.join(dir, name);
  if (!fs.existsSync(file)) {
    return null;
  }
  try {
    return JSON.parse(fs.readFileSync(file, "utf8"));
  } catch (e) {
    throw new SchemaError(`${name}: invalid JSON (${(e as Error).message})`);
  }
}

export function listFiles(dir: string): string[] {
  if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
    throw new SchemaError(`bundle directory not found: ${dir}`);
  }
  return fs.readdirSync(dir).sort();
}
