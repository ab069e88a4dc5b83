/**
 * Vocab-table parsing and reflection-id resolution, matching the core
 * engine's file format and normalization rules.
 */

const BOUNDARY_MARKERS = new Set([" ", "\t", "Ġ", "▁"]);

export function normalizeSurface(surface: string): string {
  if (surface.length > 0 && BOUNDARY_MARKERS.has(surface[0])) {
    surface = surface.slice(1);
  }
  return surface.toLowerCase();
}

function unescapeSurface(text: string): string {
  let out = "";
  let i = 0;
  while (i < text.length) {
    const ch = text[i];
    if (ch !== "\\") {
      out += ch;
      i += 1;
      continue;
    }
    const next = text[i + 1];
    if (next === "n") {
      out += "\n";
      i += 2;
    } else if (next === "t") {
      out += "\t";
      i += 2;
    } else if (next === "\\") {
      out += "\\";
      i += 2;
    } else if (next === "x") {
      out += String.fromCharCode(parseInt(text.slice(i + 2, i + 4), 16));
      i += 4;
    } else {
      throw new Error(`unknown escape \\${next} in vocab surface: ${text}`);
    }
  }
  return out;
}

/** Parse "id<TAB>surface-escaped" lines into a dense surface table. */
export function parseVocab(text: string): string[] {
  const entries = new Map<number, string>();
  for (const rawLine of text.split("\n")) {
    const line = rawLine.replace(/\r$/, "");
    if (!line) continue;
    const tab = line.indexOf("\t");
    if (tab < 0) {
      throw new Error(`vocab line missing tab separator: ${line}`);
    }
    const id = Number(line.slice(0, tab));
    if (!Number.isInteger(id) || entries.has(id)) {
      throw new Error(`bad or duplicate vocab id in line: ${line}`);
    }
    entries.set(id, unescapeSurface(line.slice(tab + 1)));
  }
  const surfaces: string[] = [];
  for (let i = 0; i < entries.size; i++) {
    const surface = entries.get(i);
    if (surface === undefined) {
      throw new Error(`vocab ids are not dense: missing id ${i}`);
    }
    surfaces.push(surface);
  }
  return surfaces;
}

/** Ids whose normalized surface equals one of the (lowercase) words. */
export function buildReflectionIds(surfaces: string[], words: string[]): number[] {
  const wanted = new Set(words.map((w) => w.toLowerCase()));
  const ids: number[] = [];
  surfaces.forEach((surface, id) => {
    if (wanted.has(normalizeSurface(surface))) {
      ids.push(id);
    }
  });
  return ids;
}
