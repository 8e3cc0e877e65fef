// SVG process schematic built from the snapshot document (the webcam
// replacement): mains valve, buffer tank with float switch, pump, elevated
// tank, irrigation valve and the six plant zones.

import type { SceneSnapshot, TankStatus } from "./types.js";

const W = 560;
const H = 330;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function tankSvg(t: TankStatus, x: number, y: number, w: number, h: number): string {
  const fillH = Math.max(0, Math.min(1, t.fill_fraction)) * (h - 4);
  const levels = ["min", "middle", "max"] as const;
  const marks = levels
    .map((name, i) => {
      const frac = (i + 1) / 4;
      const ly = y + h - frac * h;
      const on = t.levels[name];
      return `<line x1="${x - 6}" y1="${ly}" x2="${x}" y2="${ly}" class="level ${on ? "on" : "off"}"/>`;
    })
    .join("");
  return `
  <g class="tank" data-tank="${t.tank_id}">
    <rect x="${x}" y="${y}" width="${w}" height="${h}" class="tank-shell"/>
    <rect x="${x + 2}" y="${(y + h - 2 - fillH).toFixed(1)}" width="${w - 4}" height="${fillH.toFixed(1)}" class="water"/>
    ${marks}
    <text x="${x + w / 2}" y="${y + h + 14}" class="label">${t.tank_id} ${t.volume.toFixed(0)} L</text>
  </g>`;
}

function valveSvg(id: string, x: number, y: number, passing: boolean, energized: boolean): string {
  return `
  <g class="valve ${passing ? "open" : "closed"}" data-valve="${id}">
    <rect x="${x - 8}" y="${y - 8}" width="16" height="16"/>
    <title>${id}: ${energized ? "energized" : "de-energized"}, ${passing ? "passing" : "blocked"}</title>
  </g>`;
}

export function renderSchematic(scene: SceneSnapshot): string {
  const buffer = scene.tanks.find((t) => t.tank_id === "buffer") ?? scene.tanks[0];
  const upper = scene.tanks.find((t) => t.tank_id === "upper") ?? scene.tanks[1];
  const a = scene.actuators;

  const zoneW = 40;
  const zones = scene.zones
    .map((z, i) => {
      const x = 270 + i * (zoneW + 6);
      const barH = Math.max(2, (z.tension / 240) * 70);
      return `
      <g class="zone" data-zone="${esc(z.zone_id)}">
        <rect x="${x}" y="${(255 - barH).toFixed(1)}" width="${zoneW}" height="${barH.toFixed(1)}" class="tension"/>
        <text x="${x + zoneW / 2}" y="270" class="label">${esc(z.zone_id)}</text>
        <text x="${x + zoneW / 2}" y="285" class="value">${z.tension.toFixed(0)} cbar</text>
      </g>`;
    })
    .join("");

  return `<svg viewBox="0 0 ${W} ${H}" xmlns="http://www.w3.org/2000/svg" role="img" aria-label="process schematic">
  <line x1="10" y1="250" x2="60" y2="250" class="pipe"/>
  ${valveSvg("mains_valve", 60, 250, a.mains_valve.passing, a.mains_valve.energized)}
  <line x1="68" y1="250" x2="110" y2="250" class="pipe"/>
  ${tankSvg(buffer, 110, 190, 70, 90)}
  <g class="pump ${a.pump ? "on" : "off"}" data-actuator="pump">
    <circle cx="205" cy="235" r="13"/>
    <text x="205" y="239" class="label">P</text>
  </g>
  <line x1="180" y1="235" x2="192" y2="235" class="pipe"/>
  ${valveSvg("feed_valve", 235, 235, a.feed_valve.passing, a.feed_valve.energized)}
  <line x1="218" y1="235" x2="227" y2="235" class="pipe"/>
  <path d="M243 235 H255 V80 H190" class="pipe" fill="none"/>
  ${tankSvg(upper, 120, 40, 70, 80)}
  <line x1="155" y1="120" x2="155" y2="160" class="pipe"/>
  ${valveSvg("irrigation_valve", 155, 168, a.irrigation_valve.passing, a.irrigation_valve.energized)}
  <path d="M155 176 V195 H480" class="pipe manifold" fill="none"/>
  <g class="lamp ${a.lamp ? "on" : "off"}" data-actuator="lamp">
    <circle cx="520" cy="40" r="11"/>
    <text x="520" y="44" class="label">L</text>
  </g>
  <text x="12" y="242" class="label">mains</text>
  <text x="406" y="30" class="label">climate ${scene.climate.ambient_temp.toFixed(1)} C / ${scene.climate.humidity.toFixed(0)} % / ${scene.climate.solar.toFixed(0)} W/m2</text>
  ${zones}
</svg>`;
}
