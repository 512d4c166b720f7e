import { describe, expect, it } from "vitest";

import { renderMarkdown, strippedText } from "../src/markdown.js";

const TRIAL_LINK =
  "[NCT01778491](https://app.dimensions.ai/details/clinical_trial/NCT01778491)";

describe("renderMarkdown", () => {
  it("renders trial citations as new-tab anchors with the exact href", () => {
    const html = renderMarkdown(`Supported by ${TRIAL_LINK}.`);
    expect(html).toContain(
      '<a href="https://app.dimensions.ai/details/clinical_trial/NCT01778491"',
    );
    expect(html).toContain('target="_blank"');
    expect(html).toContain('rel="noopener noreferrer"');
    expect(html).toContain(">NCT01778491</a>");
  });

  it("renders a multi-link answer like the server produces", () => {
    const answer =
      "AMD is most commonly diagnosed between 60 and 90 years, supported by " +
      `${TRIAL_LINK} and [NCT00466076](https://app.dimensions.ai/details/clinical_trial/NCT00466076).`;
    const html = renderMarkdown(answer);
    const anchors = html.match(/<a href="([^"]+)"/g) ?? [];
    expect(anchors).toHaveLength(2);
    for (const anchor of anchors) {
      expect(anchor).toContain('href="https://app.dimensions.ai/details/clinical_trial/');
    }
  });

  it("never fabricates links for bare ids", () => {
    const html = renderMarkdown("bare NCT01291121 stays plain text");
    expect(html).not.toContain("<a ");
    expect(html).toContain("NCT01291121");
  });

  it("strips script elements and their payload", () => {
    const html = renderMarkdown('before <script>alert("x")</script> after');
    expect(html).not.toContain("<script");
    expect(html).not.toContain("alert");
    expect(html).toContain("before");
    expect(html).toContain("after");
  });

  it("escapes other html so it renders inert", () => {
    const html = renderMarkdown('<img src=x onerror="alert(1)">');
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img");
  });

  it("rejects non-http link schemes", () => {
    const html = renderMarkdown("[click](javascript:alert(1))");
    expect(html).not.toContain("<a ");
  });

  it("renders bold, lists, and paragraphs", () => {
    const html = renderMarkdown(
      "**Key information:**\n\n- Primary range: 60 to 90 years.\n- Supported by trials.\n\nClosing paragraph.",
    );
    expect(html).toContain("<strong>Key information:</strong>");
    expect(html).toContain("<ul><li>Primary range: 60 to 90 years.</li>");
    expect(html).toContain("<p>Closing paragraph.</p>");
  });

  it("keeps plain text unchanged inside a paragraph", () => {
    expect(renderMarkdown("just words")).toBe("<p>just words</p>");
  });

  it("stripping the rendered markdown recovers the text content", () => {
    const text = "Line one with **bold** and a link " + TRIAL_LINK + ".\n\nLine two.";
    const stripped = strippedText(renderMarkdown(text));
    expect(stripped).toBe(
      "Line one with bold and a link NCT01778491.\n\nLine two.",
    );
  });
});
