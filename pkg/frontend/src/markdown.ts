/**
 * Minimal sanitized markdown renderer for model output.
 *
 * Allowlist: paragraphs, unordered lists, **bold**, and [text](http(s)://...)
 * links. Script/style elements are removed outright, every other angle
 * bracket is escaped, and links open in a new tab. The renderer never
 * invents URLs: link targets come only from the markdown the server sent.
 */

const DANGEROUS_ELEMENT = /<(script|style)\b[^>]*>[\s\S]*?<\/\1\s*>/gi;
const DANGEROUS_TAG = /<\/?(script|style)\b[^>]*>/gi;
const LINK = /\[([^\]]+)\]\((https?:\/\/[^)\s]+)\)/g;
const BOLD = /\*\*([^*]+)\*\*/g;

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function escapeAttr(url: string): string {
  return url.replace(/"/g, "&quot;");
}

function inline(text: string): string {
  let out = text.replace(
    LINK,
    (_m, label: string, url: string) =>
      `<a href="${escapeAttr(url)}" target="_blank" rel="noopener noreferrer">${label}</a>`,
  );
  out = out.replace(BOLD, "<strong>$1</strong>");
  return out;
}

export function renderMarkdown(text: string): string {
  const cleaned = text.replace(DANGEROUS_ELEMENT, "").replace(DANGEROUS_TAG, "");
  const escaped = escapeHtml(cleaned);

  const blocks = escaped.split(/\n{2,}/);
  const html: string[] = [];
  for (const block of blocks) {
    if (!block.trim()) continue;
    const lines = block.split("\n");
    const isList = lines.every((line) => line.trim().startsWith("- ") || !line.trim());
    if (isList && lines.some((line) => line.trim().startsWith("- "))) {
      const items = lines
        .filter((line) => line.trim().startsWith("- "))
        .map((line) => `<li>${inline(line.trim().slice(2))}</li>`);
      html.push(`<ul>${items.join("")}</ul>`);
    } else {
      html.push(`<p>${inline(lines.join("<br>"))}</p>`);
    }
  }
  return html.join("\n");
}

/** Text content of rendered markdown: tags dropped, entities decoded. */
export function strippedText(html: string): string {
  return html
    .replace(/<br>/g, "\n")
    .replace(/<\/p>\n?<p>/g, "\n\n")
    .replace(/<[^>]+>/g, "")
    .replace(/&lt;/g, "<")
    .replace(/&gt;/g, ">")
    .replace(/&quot;/g, '"')
    .replace(/&amp;/g, "&");
}
